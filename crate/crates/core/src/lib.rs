//! Fixed-point FFT evaluated as NAND circuits over GSW-encrypted bits.
//!
//! Layers, bottom up: [`fhe`] (the leveled scheme), [`engine`] (NAND backends,
//! encrypted or clear), [`gates`] and [`arith`] (logic and fixed-point
//! arithmetic built from NAND), [`fft`] (the transform), [`error_model`]
//! (analytical bounds and costs) and [`harness`] (accuracy experiments).

pub mod arith;
pub mod bitmatrix;
pub mod cli;
pub mod engine;
pub mod error_model;
pub mod fft;
pub mod fhe;
pub mod formats;
pub mod gates;
pub mod harness;
pub mod modq;
