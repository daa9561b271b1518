//! Analytical error bounds for the fixed-point FFT, and NAND-count and space
//! cost estimates.
//!
//! `delta` is the representation error of one value, `2^-f` by default.
//! Bounds are per real component.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::FixedFormat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid error parameters: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorParams {
    pub delta: f64,
    /// Bound on `|Re|` and `|Im|` of every input point.
    pub x_bound: f64,
    pub m_points: usize,
    /// Sum of twiddle magnitudes over all butterflies.
    pub w_sum: f64,
}

/// `(N / 2) log2 N`, the number of butterflies in an `N`-point transform and
/// the fallback value of `w_sum`.
pub fn butterfly_count(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    n as f64 / 2.0 * (n as f64).log2()
}

impl ErrorParams {
    /// Uses the worst-case `w_sum = (N / 2) log2 N`.
    pub fn new(delta: f64, x_bound: f64, m_points: usize) -> Result<Self> {
        let p = Self {
            delta,
            x_bound,
            m_points,
            w_sum: butterfly_count(m_points),
        };
        p.validate()?;
        Ok(p)
    }

    /// `delta = 2^-f`.
    pub fn for_format(format: FixedFormat, x_bound: f64, m_points: usize) -> Result<Self> {
        Self::new(format.delta(), x_bound, m_points)
    }

    /// Replaces `w_sum` with a tighter value, e.g. computed from the twiddles.
    pub fn with_w_sum(mut self, w_sum: f64) -> Result<Self> {
        self.w_sum = w_sum;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(ModelError::Invalid(format!("delta {} not in [0, 1)", self.delta)));
        }
        if !(self.x_bound > 0.0 && self.x_bound.is_finite()) {
            return Err(ModelError::Invalid(format!("x_bound {} must be positive", self.x_bound)));
        }
        if self.m_points == 0 || !self.m_points.is_power_of_two() {
            return Err(ModelError::Invalid(format!(
                "signal length {} is not a power of two",
                self.m_points
            )));
        }
        let cap = butterfly_count(self.m_points);
        if !(0.0..=cap * (1.0 + 1e-12)).contains(&self.w_sum) {
            return Err(ModelError::Invalid(format!(
                "w_sum {} outside [0, {cap}]",
                self.w_sum
            )));
        }
        Ok(())
    }

    /// A one-point transform performs no arithmetic; its bound is vacuous.
    pub fn is_trivial(&self) -> bool {
        self.m_points == 1
    }
}

/// Error of the product of `(a + bi)` and `(c + di)` when each operand
/// carries representation error `delta`, first order only:
/// `(delta (a + c - b - d), delta (a + b + c + d))`.
pub fn cpmult_error(a: f64, b: f64, c: f64, d: f64, delta: f64) -> (f64, f64) {
    (delta * (a + c - b - d), delta * (a + b + c + d))
}

/// Per-component error bound for either output of one butterfly:
/// `delta (|Re w| + |Im w| + |Re xj| + |Im xj| + 1)`.
///
/// The two outputs differ only in the sign of the product term, so taking
/// magnitudes gives one bound for both.
pub fn butterfly_error(w: Complex64, xj: Complex64, delta: f64) -> f64 {
    delta * (w.re.abs() + w.im.abs() + xj.re.abs() + xj.im.abs() + 1.0)
}

/// `delta (N / 2) (log2 N + x_bound + 1)`.
pub fn fft_error_bound(p: &ErrorParams) -> f64 {
    let n = p.m_points as f64;
    p.delta * (n / 2.0) * (n.log2() + p.x_bound + 1.0)
}

/// `delta (w_sum + (N / 2) (x_bound + 1))`; equals [`fft_error_bound`] at the
/// worst-case `w_sum`.
pub fn fft_error_bound_intermediate(p: &ErrorParams) -> f64 {
    p.delta * (p.w_sum + p.m_points as f64 / 2.0 * (p.x_bound + 1.0))
}

/// Bound for a row-column 2D transform of a `rows x cols` image.
///
/// The row pass errs by at most `b_r = bound(cols, x_bound)` per component and
/// leaves components below `cols * sqrt(2) * x_bound`. The column pass sums
/// `rows` rotated copies of the row errors, `rows * sqrt(2) * b_r`, and adds
/// its own `bound(rows, cols * sqrt(2) * x_bound)`.
pub fn fft_2d_error_bound(delta: f64, x_bound: f64, rows: usize, cols: usize) -> Result<f64> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let row_pass = fft_error_bound(&ErrorParams::new(delta, x_bound, cols)?);
    let col_pass = fft_error_bound(&ErrorParams::new(delta, cols as f64 * sqrt2 * x_bound, rows)?);
    Ok(rows as f64 * sqrt2 * row_pass + col_pass)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCostModel {
    /// Word width `F`.
    pub fixed_width: u64,
    /// Ciphertext side length.
    pub ct_side: u64,
    /// Points per transform.
    pub signal_len: u64,
    /// Total values held encrypted.
    pub signal_total: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostOp {
    Add,
    Mul,
    Fft,
}

/// Predicted NAND count: `36 F` per add, `288 F^2 log2 F` per multiply, and
/// `(M / 2) log2 M` butterflies of four multiplies and six adds per FFT.
pub fn nand_cost(model: &GateCostModel, op: CostOp) -> u64 {
    let f = model.fixed_width;
    let add = 36 * f;
    let mul = (288.0 * (f * f) as f64 * (f as f64).log2()).ceil() as u64;
    match op {
        CostOp::Add => add,
        CostOp::Mul => mul,
        CostOp::Fft => {
            let butterflies = butterfly_count(model.signal_len as usize) as u64;
            butterflies * (4 * mul + 6 * add)
        }
    }
}

/// Ciphertext entries needed to hold the signal: `L F N_ct^2`.
pub fn space_cost(model: &GateCostModel) -> u128 {
    model.signal_total as u128 * model.fixed_width as u128 * (model.ct_side as u128).pow(2)
}

/// Everything the `bound` command reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub m_points: usize,
    pub total_bits: u32,
    pub frac_bits: u32,
    pub delta: f64,
    pub x_bound: f64,
    pub w_sum: f64,
    pub bound: f64,
    pub bound_from_w_sum: f64,
    pub trivial: bool,
    pub nand_add: u64,
    pub nand_mul: u64,
    pub nand_fft: u64,
    pub space_entries: u128,
}

pub fn summarize(format: FixedFormat, x_bound: f64, m_points: usize, w_sum: Option<f64>, ct_side: u64) -> Result<BoundSummary> {
    let mut p = ErrorParams::for_format(format, x_bound, m_points)?;
    if let Some(w) = w_sum {
        p = p.with_w_sum(w)?;
    }
    let model = GateCostModel {
        fixed_width: format.total_bits() as u64,
        ct_side,
        signal_len: m_points as u64,
        signal_total: 2 * m_points as u64,
    };
    Ok(BoundSummary {
        m_points,
        total_bits: format.total_bits(),
        frac_bits: format.frac_bits(),
        delta: p.delta,
        x_bound,
        w_sum: p.w_sum,
        bound: fft_error_bound(&p),
        bound_from_w_sum: fft_error_bound_intermediate(&p),
        trivial: p.is_trivial(),
        nand_add: nand_cost(&model, CostOp::Add),
        nand_mul: nand_cost(&model, CostOp::Mul),
        nand_fft: nand_cost(&model, CostOp::Fft),
        space_entries: space_cost(&model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{self, FixedWord};
    use crate::engine::{BitEngine, ClearEngine};
    use crate::fft::{butterfly, ComplexFixed, Twiddle, TwiddleTable};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const D16: f64 = 1.0 / 65536.0;

    #[test]
    fn cpmult_examples() {
        assert_eq!(cpmult_error(0.3, 0.2, 0.9, 0.1, 0.0), (0.0, 0.0));
        assert_eq!(cpmult_error(1.0, 0.0, 1.0, 0.0, 0.5), (1.0, 1.0));
        assert_eq!(cpmult_error(0.7, 0.7, 0.7, 0.7, 0.1).0, 0.0);
    }

    #[test]
    fn butterfly_examples() {
        let (w, x) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        assert_eq!(butterfly_error(w, x, 0.0), 0.0);
        assert_eq!(butterfly_error(w, x, D16), 3.0 * D16);
    }

    #[test]
    fn closed_form_examples() {
        let p = ErrorParams::new(1.5259e-5, 1.0, 8).unwrap();
        assert!((fft_error_bound(&p) - 3.052e-4).abs() < 1e-7);
        assert!((fft_error_bound_intermediate(&p) - fft_error_bound(&p)).abs() < 1e-15);
        let big = ErrorParams::new(D16, 1.0, 128).unwrap();
        let small = ErrorParams::new(D16, 1.0, 8).unwrap();
        assert!((fft_error_bound(&big) / fft_error_bound(&small) - 28.8).abs() < 1e-9);
        let one = ErrorParams::new(D16, 1.0, 1).unwrap();
        assert!(one.is_trivial());
        assert_eq!(fft_error_bound(&one), D16);
    }

    #[test]
    fn params_are_validated() {
        assert!(ErrorParams::new(1.0, 1.0, 8).is_err());
        assert!(ErrorParams::new(D16, 0.0, 8).is_err());
        assert!(ErrorParams::new(D16, 1.0, 12).is_err());
        assert!(ErrorParams::new(D16, 1.0, 8).unwrap().with_w_sum(12.5).is_err());
    }

    #[test]
    fn exact_twiddle_sum_meets_the_fallback() {
        for m in [2usize, 8, 64] {
            let f = FixedFormat::new(32, 16).unwrap();
            let w = TwiddleTable::new(m, f).unwrap().magnitude_sum();
            let p = ErrorParams::for_format(f, 1.0, m).unwrap().with_w_sum(w).unwrap();
            assert!((fft_error_bound_intermediate(&p) - fft_error_bound(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_examples() {
        let model = |f, l| GateCostModel {
            fixed_width: f,
            ct_side: 64,
            signal_len: 8,
            signal_total: l,
        };
        assert_eq!(nand_cost(&model(32, 8), CostOp::Add), 1152);
        assert_eq!(nand_cost(&model(32, 8), CostOp::Mul), 1_474_560);
        assert_eq!(nand_cost(&model(32, 8), CostOp::Fft), 12 * (4 * 1_474_560 + 6 * 1152));
        assert_eq!(space_cost(&model(32, 8)), 1_048_576);
        assert_eq!(space_cost(&model(32, 0)), 0);
        assert_eq!(space_cost(&model(64, 8)), 2 * space_cost(&model(32, 8)));
    }

    #[test]
    fn measured_circuit_costs_stay_below_predictions() {
        let e = ClearEngine::new();
        for width in [8u32, 16, 32] {
            let f = FixedFormat::new(width, width / 2).unwrap();
            let model = GateCostModel {
                fixed_width: width as u64,
                ct_side: 1,
                signal_len: 4,
                signal_total: 1,
            };
            let x = FixedWord::input(&e, -0.37, f).unwrap();
            let y = FixedWord::input(&e, 0.81, f).unwrap();
            e.reset_stats();
            arith::add(&e, &x, &y).unwrap();
            assert!(e.stats().nand_count <= nand_cost(&model, CostOp::Add));
            e.reset_stats();
            arith::mul_fixed(&e, &x, &y).unwrap();
            assert!(e.stats().nand_count <= nand_cost(&model, CostOp::Mul));
        }
    }

    #[test]
    fn butterfly_bound_covers_monte_carlo_circuits() {
        let e = ClearEngine::new();
        let f = FixedFormat::new(32, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tw = TwiddleTable::new(64, f).unwrap();
        let grid = |rng: &mut ChaCha8Rng| f.int_to_real(f.encode_int(rng.gen_range(-1.0..1.0)).unwrap());
        for _ in 0..1000 {
            let xi = Complex64::new(grid(&mut rng), grid(&mut rng));
            let xj = Complex64::new(grid(&mut rng), grid(&mut rng));
            let k = rng.gen_range(0..32);
            let w: Twiddle = tw.get(k);
            let exact_w = tw.exact(k);
            let ci = ComplexFixed::input(&e, xi, f).unwrap();
            let cj = ComplexFixed::input(&e, xj, f).unwrap();
            let (top, bottom) = butterfly(&e, &ci, &cj, w).unwrap();
            let bound = butterfly_error(exact_w, xj, f.delta());
            for (got, want) in [(top, xi + exact_w * xj), (bottom, xi - exact_w * xj)] {
                let z = got.read(&e).unwrap();
                assert!((z.re - want.re).abs() <= bound && (z.im - want.im).abs() <= bound);
            }
        }
    }

    proptest! {
        #[test]
        fn bound_is_monotone(
            k in 0u32..10,
            f in 8u32..30,
            xb in 0.01f64..100.0,
            grow in 1.0f64..4.0,
        ) {
            let n = 1usize << k;
            let d = (2.0f64).powi(-(f as i32));
            let base = fft_error_bound(&ErrorParams::new(d, xb, n).unwrap());
            prop_assert!(fft_error_bound(&ErrorParams::new(d, xb, 2 * n).unwrap()) >= base);
            prop_assert!(fft_error_bound(&ErrorParams::new(2.0 * d, xb, n).unwrap()) >= base);
            prop_assert!(fft_error_bound(&ErrorParams::new(d, xb * grow, n).unwrap()) >= base);
        }
    }
}
