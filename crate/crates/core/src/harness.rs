//! Accuracy experiments: random signals and images pushed through the circuit
//! FFT and compared with a double-precision FFT of the unquantized input.
//!
//! Error statistics run over the absolute errors of all `2M` real components
//! of every transform; the variance is the population variance.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::FixedFormat;
use crate::engine::BitEngine;
use crate::error_model::{fft_2d_error_bound, fft_error_bound, ErrorParams, ModelError};
use crate::fft::{self, Dims, FftError, SignalBuffer, TwiddleTable};

/// Published mean errors for random `[0, 1]` signals at `F = 32`, `f = 16`.
pub const REFERENCE_1D_MEANS: [(usize, f64); 5] = [
    (8, 1.294e-5),
    (16, 2.216e-5),
    (32, 4.199e-5),
    (64, 8.383e-5),
    (128, 1.81e-4),
];

/// Published mean error over ten `16 x 16` images at `F = 32`, `f = 16`.
pub const REFERENCE_2D_MEAN: f64 = 6.067e-5;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Fft(#[from] FftError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Input(String),
}

type Result<T> = std::result::Result<T, HarnessError>;

/// Unnormalized radix-2 FFT in `f64`, recursive even/odd split.
pub fn oracle_fft(x: &[Complex64]) -> Vec<Complex64> {
    let m = x.len();
    assert!(m.is_power_of_two(), "oracle needs a power-of-two length");
    if m == 1 {
        return x.to_vec();
    }
    let even: Vec<Complex64> = x.iter().step_by(2).copied().collect();
    let odd: Vec<Complex64> = x.iter().skip(1).step_by(2).copied().collect();
    let (e, o) = (oracle_fft(&even), oracle_fft(&odd));
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..m / 2 {
        let t = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / m as f64) * o[k];
        out[k] = e[k] + t;
        out[k + m / 2] = e[k] - t;
    }
    out
}

/// Row-column 2D oracle over a row-major `rows x cols` image.
pub fn oracle_fft_2d(x: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = x.to_vec();
    for r in 0..rows {
        let line = oracle_fft(&out[r * cols..(r + 1) * cols]);
        out[r * cols..(r + 1) * cols].copy_from_slice(&line);
    }
    for c in 0..cols {
        let line: Vec<Complex64> = (0..rows).map(|r| out[r * cols + c]).collect();
        for (r, v) in oracle_fft(&line).into_iter().enumerate() {
            out[r * cols + c] = v;
        }
    }
    out
}

/// Absolute errors of every real and imaginary component.
pub fn component_errors(got: &[Complex64], want: &[Complex64]) -> Vec<f64> {
    got.iter()
        .zip(want)
        .flat_map(|(g, w)| [(g.re - w.re).abs(), (g.im - w.im).abs()])
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub components: usize,
    pub total: f64,
    pub mean: f64,
    pub variance: f64,
    pub std_dev: f64,
    pub max: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Self {
        let n = errors.len();
        if n == 0 {
            return Self::default();
        }
        let total: f64 = errors.iter().sum();
        let mean = total / n as f64;
        let variance = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            components: n,
            total,
            mean,
            variance,
            std_dev: variance.sqrt(),
            max: errors.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `"8"` for 1D runs, `"16x16"` for images.
    pub size: String,
    pub points: usize,
    pub trials: usize,
    pub backend: String,
    pub total_bits: u32,
    pub frac_bits: u32,
    /// Sum of errors per transform, averaged over trials.
    pub total_error: f64,
    pub mean_error: f64,
    pub variance: f64,
    pub std_dev: f64,
    pub max_error: f64,
    pub x_bound: f64,
    pub error_bound: f64,
    /// NANDs per transform.
    pub nand_count: u64,
    pub max_depth: u32,
    pub wall_time_s: f64,
}

impl ErrorReport {
    #[allow(clippy::too_many_arguments)]
    fn build(
        size: String,
        points: usize,
        trials: usize,
        backend: &dyn BitEngine,
        format: FixedFormat,
        stats: ErrorStats,
        x_bound: f64,
        bound: f64,
        nands: u64,
        wall_time_s: f64,
    ) -> Self {
        Self {
            size,
            points,
            trials,
            backend: backend.name().to_string(),
            total_bits: format.total_bits(),
            frac_bits: format.frac_bits(),
            total_error: stats.total / trials.max(1) as f64,
            mean_error: stats.mean,
            variance: stats.variance,
            std_dev: stats.std_dev,
            max_error: stats.max,
            x_bound,
            error_bound: bound,
            nand_count: nands / trials.max(1) as u64,
            max_depth: backend.stats().max_depth,
            wall_time_s,
        }
    }

    /// Every component error is within the analytical bound.
    pub fn within_bound(&self) -> bool {
        self.max_error <= self.error_bound
    }
}

/// Re and im uniform in `[0, 1)`.
pub fn random_signal<R: Rng>(m: usize, rng: &mut R) -> Vec<Complex64> {
    (0..m).map(|_| Complex64::new(rng.gen(), rng.gen())).collect()
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Transforms one plaintext signal through the circuit and returns the
/// decoded spectrum.
pub fn circuit_fft_1d(engine: &dyn BitEngine, x: &[Complex64], format: FixedFormat) -> Result<Vec<Complex64>> {
    let s = SignalBuffer::input(engine, x, Dims::OneD(x.len()), format)?;
    let tw = TwiddleTable::new(x.len(), format)?;
    Ok(fft::fft_1d(engine, &s, &tw)?.read(engine)?)
}

pub fn circuit_fft_2d(
    engine: &dyn BitEngine,
    x: &[Complex64],
    rows: usize,
    cols: usize,
    format: FixedFormat,
) -> Result<Vec<Complex64>> {
    let s = SignalBuffer::input(engine, x, Dims::TwoD { rows, cols }, format)?;
    Ok(fft::fft_2d(engine, &s)?.read(engine)?)
}

/// `trials` random signals of length `m`, components uniform in `[0, 1)`.
/// Trials run in parallel; results depend only on `seed`.
pub fn run_1d_experiment(
    m: usize,
    format: FixedFormat,
    trials: usize,
    seed: u64,
    backend: &dyn BitEngine,
) -> Result<ErrorReport> {
    if trials == 0 {
        return Err(HarnessError::Input("at least one trial is required".into()));
    }
    let x_bound = 1.0;
    let bound = fft_error_bound(&ErrorParams::for_format(format, x_bound, m)?);
    let before = backend.stats().nand_count;
    let start = Instant::now();
    let errors: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let x = random_signal(m, &mut trial_rng(seed, t));
            let got = circuit_fft_1d(backend, &x, format)?;
            Ok(component_errors(&got, &oracle_fft(&x)))
        })
        .collect::<Result<_>>()?;
    let stats = ErrorStats::from_errors(&errors.concat());
    Ok(ErrorReport::build(
        m.to_string(),
        m,
        trials,
        backend,
        format,
        stats,
        x_bound,
        bound,
        backend.stats().nand_count - before,
        start.elapsed().as_secs_f64(),
    ))
}

/// A real-valued grayscale image with pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(HarnessError::Input(format!(
                "{} pixels for a {rows}x{cols} image",
                pixels.len()
            )));
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn as_complex(&self) -> Vec<Complex64> {
        self.pixels.iter().map(|&p| Complex64::new(p, 0.0)).collect()
    }
}

/// `count` images with pixels uniform in `[0, 1)`.
pub fn random_images(count: usize, rows: usize, cols: usize, seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            Image {
                rows,
                cols,
                pixels: (0..rows * cols).map(|_| rng.gen()).collect(),
            }
        })
        .collect()
}

/// Ten structured and noisy test images: uniform noise, gradients, a
/// checkerboard, rings, soft blobs, stripes and a textured mix.
pub fn test_images(rows: usize, cols: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rf, cf) = (rows as f64, cols as f64);
    let mut images = Vec::new();
    let mut push = |f: &dyn Fn(f64, f64) -> f64| {
        let pixels = (0..rows * cols)
            .map(|i| f((i / cols) as f64 / rf, (i % cols) as f64 / cf).clamp(0.0, 1.0))
            .collect();
        images.push(Image { rows, cols, pixels });
    };
    let noise: Vec<f64> = (0..rows * cols).map(|_| rng.gen()).collect();
    let noise2: Vec<f64> = (0..rows * cols).map(|_| rng.gen()).collect();
    let idx = |y: f64, x: f64| ((y * rf).round() as usize).min(rows - 1) * cols + ((x * cf).round() as usize).min(cols - 1);
    let blobs: Vec<(f64, f64, f64)> = (0..4).map(|_| (rng.gen(), rng.gen(), rng.gen_range(0.05..0.2))).collect();
    push(&|y, x| noise[idx(y, x)]);
    push(&|y, x| (x + y) / 2.0);
    push(&|y, _| y);
    push(&|y, x| (((y * 8.0) as usize + (x * 8.0) as usize) % 2) as f64);
    push(&|y, x| 0.5 + 0.5 * (12.0 * ((y - 0.5).powi(2) + (x - 0.5).powi(2)).sqrt()).cos());
    push(&|y, x| {
        blobs
            .iter()
            .map(|&(cy, cx, s)| (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * s * s)).exp())
            .sum::<f64>()
            .min(1.0)
    });
    push(&|_, x| 0.5 + 0.5 * (2.0 * std::f64::consts::PI * 3.0 * x).sin());
    push(&|y, x| 0.7 * noise2[idx(y, x)] + 0.3 * x);
    push(&|y, x| if (y - 0.5).abs() < 0.25 && (x - 0.5).abs() < 0.25 { 0.9 } else { 0.1 });
    push(&|y, x| 0.5 * (noise[idx(y, x)] + noise2[idx(y, x)]));
    images
}

/// 2D transforms of `images`, all of one size.
pub fn run_2d_experiment(images: &[Image], format: FixedFormat, backend: &dyn BitEngine) -> Result<ErrorReport> {
    let first = images
        .first()
        .ok_or_else(|| HarnessError::Input("no images".into()))?;
    let (rows, cols) = (first.rows, first.cols);
    if images.iter().any(|i| (i.rows, i.cols) != (rows, cols)) {
        return Err(HarnessError::Input("images differ in size".into()));
    }
    let x_bound = 1.0;
    let bound = fft_2d_error_bound(format.delta(), x_bound, rows, cols)?;
    let before = backend.stats().nand_count;
    let start = Instant::now();
    let errors: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| {
            let x = img.as_complex();
            let got = circuit_fft_2d(backend, &x, rows, cols, format)?;
            Ok(component_errors(&got, &oracle_fft_2d(&x, rows, cols)))
        })
        .collect::<Result<_>>()?;
    Ok(ErrorReport::build(
        format!("{rows}x{cols}"),
        rows * cols,
        images.len(),
        backend,
        format,
        ErrorStats::from_errors(&errors.concat()),
        x_bound,
        bound,
        backend.stats().nand_count - before,
        start.elapsed().as_secs_f64(),
    ))
}

/// Compares a computed spectrum with the oracle transform of `plain`.
/// `x_bound` is taken from the data.
pub fn verify_spectrum(
    plain: &[Complex64],
    spectrum: &[Complex64],
    dims: Dims,
    format: FixedFormat,
) -> Result<ErrorReport> {
    if plain.len() != spectrum.len() || plain.len() != dims.len() {
        return Err(HarnessError::Input(format!(
            "signal has {} points, spectrum {}, shape {dims:?}",
            plain.len(),
            spectrum.len()
        )));
    }
    let x_bound = plain
        .iter()
        .map(|z| z.re.abs().max(z.im.abs()))
        .fold(f64::MIN_POSITIVE, f64::max);
    let (want, bound, size) = match dims {
        Dims::OneD(m) => (
            oracle_fft(plain),
            fft_error_bound(&ErrorParams::for_format(format, x_bound, m)?),
            m.to_string(),
        ),
        Dims::TwoD { rows, cols } => (
            oracle_fft_2d(plain, rows, cols),
            fft_2d_error_bound(format.delta(), x_bound, rows, cols)?,
            format!("{rows}x{cols}"),
        ),
    };
    let stats = ErrorStats::from_errors(&component_errors(spectrum, &want));
    Ok(ErrorReport {
        size,
        points: plain.len(),
        trials: 1,
        backend: "n/a".into(),
        total_bits: format.total_bits(),
        frac_bits: format.frac_bits(),
        total_error: stats.total,
        mean_error: stats.mean,
        variance: stats.variance,
        std_dev: stats.std_dev,
        max_error: stats.max,
        x_bound,
        error_bound: bound,
        nand_count: 0,
        max_depth: 0,
        wall_time_s: 0.0,
    })
}

/// Aligned text table, one row per report.
pub fn format_table(reports: &[ErrorReport]) -> String {
    let mut out = format!(
        "{:>7} {:>7} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10} {:>9}\n",
        "size", "trials", "total", "mean", "variance", "std_dev", "max", "bound", "nands", "time_s"
    );
    for r in reports {
        out.push_str(&format!(
            "{:>7} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>10} {:>9.2}\n",
            r.size,
            r.trials,
            r.total_error,
            r.mean_error,
            r.variance,
            r.std_dev,
            r.max_error,
            r.error_bound,
            r.nand_count,
            r.wall_time_s
        ));
    }
    out
}
