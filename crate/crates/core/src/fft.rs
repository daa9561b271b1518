//! Radix-2 decimation-in-time FFT over fixed-point complex words.
//!
//! Twiddle factors `W_M^k = exp(-2 pi i k / M)` are public constants, rounded
//! to the nearest step of the word format and multiplied in with
//! [`arith::mul_const_int`]. The transform is unnormalized. The 2D transform
//! runs the 1D transform over every row, then every column, in one format.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::arith::{self, ArithError, FixedFormat, FixedWord};
use crate::engine::{BitEngine, EngineError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FftError {
    #[error("signal length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Arith(#[from] ArithError),
}

impl From<EngineError> for FftError {
    fn from(e: EngineError) -> Self {
        FftError::Arith(e.into())
    }
}

type Result<T> = std::result::Result<T, FftError>;

#[derive(Clone, Debug)]
pub struct ComplexFixed {
    pub re: FixedWord,
    pub im: FixedWord,
}

impl ComplexFixed {
    pub fn new(re: FixedWord, im: FixedWord) -> Result<Self> {
        if re.format() != im.format() {
            return Err(ArithError::FormatMismatch(re.format(), im.format()).into());
        }
        Ok(Self { re, im })
    }

    pub fn input<E: BitEngine + ?Sized>(e: &E, z: Complex64, format: FixedFormat) -> Result<Self> {
        Ok(Self {
            re: FixedWord::input(e, z.re, format)?,
            im: FixedWord::input(e, z.im, format)?,
        })
    }

    pub fn constant(z: Complex64, format: FixedFormat) -> Result<Self> {
        Ok(Self {
            re: FixedWord::constant(z.re, format)?,
            im: FixedWord::constant(z.im, format)?,
        })
    }

    pub fn format(&self) -> FixedFormat {
        self.re.format()
    }

    /// Raw two's-complement integers `(re, im)`.
    pub fn read_raw<E: BitEngine + ?Sized>(&self, e: &E) -> Result<(i64, i64)> {
        Ok((self.re.read_int(e)?, self.im.read_int(e)?))
    }

    pub fn read<E: BitEngine + ?Sized>(&self, e: &E) -> Result<Complex64> {
        Ok(Complex64::new(self.re.read(e)?, self.im.read(e)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dims {
    OneD(usize),
    TwoD { rows: usize, cols: usize },
}

impl Dims {
    pub fn len(&self) -> usize {
        match *self {
            Dims::OneD(m) => m,
            Dims::TwoD { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A 1D signal or a row-major 2D image of complex fixed-point points.
#[derive(Clone, Debug)]
pub struct SignalBuffer {
    points: Vec<ComplexFixed>,
    dims: Dims,
}

fn check_pow2(m: usize) -> Result<()> {
    if m == 0 || !m.is_power_of_two() {
        return Err(FftError::NotPowerOfTwo(m));
    }
    Ok(())
}

impl SignalBuffer {
    pub fn new(points: Vec<ComplexFixed>, dims: Dims) -> Result<Self> {
        match dims {
            Dims::OneD(m) => check_pow2(m)?,
            Dims::TwoD { rows, cols } => {
                check_pow2(rows)?;
                check_pow2(cols)?;
            }
        }
        if points.len() != dims.len() {
            return Err(FftError::Shape(format!(
                "{} points for dimensions {dims:?}",
                points.len()
            )));
        }
        if let Some(first) = points.first() {
            if let Some(p) = points.iter().find(|p| p.format() != first.format()) {
                return Err(ArithError::FormatMismatch(first.format(), p.format()).into());
            }
        }
        Ok(Self { points, dims })
    }

    /// Brings plaintext samples into the engine as private inputs.
    pub fn input<E: BitEngine + ?Sized>(
        e: &E,
        samples: &[Complex64],
        dims: Dims,
        format: FixedFormat,
    ) -> Result<Self> {
        let points = samples
            .iter()
            .map(|&z| ComplexFixed::input(e, z, format))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, dims)
    }

    pub fn points(&self) -> &[ComplexFixed] {
        &self.points
    }

    pub fn into_points(self) -> Vec<ComplexFixed> {
        self.points
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn format(&self) -> FixedFormat {
        self.points[0].format()
    }

    pub fn read<E: BitEngine + ?Sized>(&self, e: &E) -> Result<Vec<Complex64>> {
        self.points.iter().map(|p| p.read(e)).collect()
    }

    pub fn read_raw<E: BitEngine + ?Sized>(&self, e: &E) -> Result<Vec<(i64, i64)>> {
        self.points.iter().map(|p| p.read_raw(e)).collect()
    }
}

/// A rounded twiddle factor as raw fixed-point integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Twiddle {
    pub re: i64,
    pub im: i64,
}

/// `W_M^k` for `k < M / 2`, rounded to nearest at the table's format.
#[derive(Clone, Debug)]
pub struct TwiddleTable {
    m: usize,
    format: FixedFormat,
    entries: Vec<Twiddle>,
}

impl TwiddleTable {
    pub fn new(m: usize, format: FixedFormat) -> Result<Self> {
        check_pow2(m)?;
        let entries = (0..m / 2)
            .map(|k| {
                let w = Self::exact_for(m, k);
                Ok(Twiddle {
                    re: format.encode_int(w.re)?,
                    im: format.encode_int(w.im)?,
                })
            })
            .collect::<std::result::Result<Vec<_>, ArithError>>()?;
        Ok(Self { m, format, entries })
    }

    fn exact_for(m: usize, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / m as f64)
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn get(&self, k: usize) -> Twiddle {
        self.entries[k]
    }

    /// The rounded value of `W_M^k` as a real complex number.
    pub fn value(&self, k: usize) -> Complex64 {
        let t = self.entries[k];
        Complex64::new(self.format.int_to_real(t.re), self.format.int_to_real(t.im))
    }

    pub fn exact(&self, k: usize) -> Complex64 {
        Self::exact_for(self.m, k)
    }

    /// Twiddle index used by butterfly `k` of the stage with half-span `h`.
    pub fn index(&self, h: usize, k: usize) -> usize {
        k * (self.m / (2 * h))
    }

    /// Sum of `|W|` over every butterfly of a full transform, using the exact
    /// twiddles. Equals `(M / 2) log2 M`.
    pub fn magnitude_sum(&self) -> f64 {
        let mut total = 0.0;
        let mut h = 1;
        while h < self.m {
            for _ in 0..self.m / (2 * h) {
                total += (0..h).map(|k| self.exact(self.index(h, k)).norm()).sum::<f64>();
            }
            h *= 2;
        }
        total
    }
}

pub fn bit_reverse_index(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Moves point `i` to `reverse_bits(i)`. A plaintext index shuffle.
pub fn bit_reverse_permute(s: &SignalBuffer) -> Result<SignalBuffer> {
    let m = match s.dims {
        Dims::OneD(m) => m,
        Dims::TwoD { .. } => return Err(FftError::Shape("bit reversal needs a 1D signal".into())),
    };
    let bits = m.trailing_zeros();
    let mut points = s.points.clone();
    for (i, p) in s.points.iter().enumerate() {
        points[bit_reverse_index(i, bits)] = p.clone();
    }
    Ok(SignalBuffer { points, dims: s.dims })
}

/// `t = w * xj` (four constant multiplies, one sub, one add), then
/// `(xi + t, xi - t)`.
pub fn butterfly<E: BitEngine + ?Sized>(
    e: &E,
    xi: &ComplexFixed,
    xj: &ComplexFixed,
    w: Twiddle,
) -> Result<(ComplexFixed, ComplexFixed)> {
    let rr = arith::mul_const_int(e, &xj.re, w.re)?;
    let ii = arith::mul_const_int(e, &xj.im, w.im)?;
    let ri = arith::mul_const_int(e, &xj.im, w.re)?;
    let ir = arith::mul_const_int(e, &xj.re, w.im)?;
    let t = ComplexFixed {
        re: arith::sub(e, &rr, &ii)?,
        im: arith::add(e, &ri, &ir)?,
    };
    let top = ComplexFixed {
        re: arith::add(e, &xi.re, &t.re)?,
        im: arith::add(e, &xi.im, &t.im)?,
    };
    let bottom = ComplexFixed {
        re: arith::sub(e, &xi.re, &t.re)?,
        im: arith::sub(e, &xi.im, &t.im)?,
    };
    Ok((top, bottom))
}

/// Structure of an evaluated transform.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FftTrace {
    pub stages: usize,
    pub butterflies: usize,
}

pub fn fft_1d<E: BitEngine + ?Sized>(e: &E, s: &SignalBuffer, tw: &TwiddleTable) -> Result<SignalBuffer> {
    fft_1d_traced(e, s, tw).map(|(out, _)| out)
}

/// [`fft_1d`] plus a count of the stages and butterflies evaluated.
/// Butterflies within a stage run in parallel.
pub fn fft_1d_traced<E: BitEngine + ?Sized>(
    e: &E,
    s: &SignalBuffer,
    tw: &TwiddleTable,
) -> Result<(SignalBuffer, FftTrace)> {
    let m = s.len();
    if tw.len() != m || !matches!(s.dims, Dims::OneD(_)) {
        return Err(FftError::Shape(format!(
            "twiddle table for {} points used on {:?}",
            tw.len(),
            s.dims
        )));
    }
    if tw.format() != s.format() {
        return Err(ArithError::FormatMismatch(tw.format(), s.format()).into());
    }
    let mut points = bit_reverse_permute(s)?.points;
    let mut trace = FftTrace::default();
    let mut h = 1;
    while h < m {
        let pairs: Vec<(usize, usize, Twiddle)> = (0..m)
            .step_by(2 * h)
            .flat_map(|start| (0..h).map(move |k| (start + k, start + k + h, k)))
            .map(|(i, j, k)| (i, j, tw.get(tw.index(h, k))))
            .collect();
        let outputs = pairs
            .par_iter()
            .map(|&(i, j, w)| butterfly(e, &points[i], &points[j], w))
            .collect::<Result<Vec<_>>>()?;
        for (&(i, j, _), (top, bottom)) in pairs.iter().zip(outputs) {
            points[i] = top;
            points[j] = bottom;
        }
        trace.stages += 1;
        trace.butterflies += pairs.len();
        h *= 2;
    }
    Ok((SignalBuffer { points, dims: s.dims }, trace))
}

/// Row-column 2D transform.
pub fn fft_2d<E: BitEngine + ?Sized>(e: &E, img: &SignalBuffer) -> Result<SignalBuffer> {
    let (rows, cols) = match img.dims {
        Dims::TwoD { rows, cols } => (rows, cols),
        Dims::OneD(_) => return Err(FftError::Shape("fft_2d needs a 2D buffer".into())),
    };
    let format = img.format();
    let row_table = TwiddleTable::new(cols, format)?;
    let col_table = TwiddleTable::new(rows, format)?;
    let mut points = img.points.clone();
    for r in 0..rows {
        let line = SignalBuffer::new(points[r * cols..(r + 1) * cols].to_vec(), Dims::OneD(cols))?;
        let out = fft_1d(e, &line, &row_table)?;
        for (c, p) in out.points.into_iter().enumerate() {
            points[r * cols + c] = p;
        }
    }
    for c in 0..cols {
        let line = SignalBuffer::new((0..rows).map(|r| points[r * cols + c].clone()).collect(), Dims::OneD(rows))?;
        let out = fft_1d(e, &line, &col_table)?;
        for (r, p) in out.points.into_iter().enumerate() {
            points[r * cols + c] = p;
        }
    }
    Ok(SignalBuffer { points, dims: img.dims })
}

/// Warns when outputs of a transform over `points` samples with component
/// bound `x_bound` could reach the format's integer range and wrap.
pub fn headroom_warning(points: usize, x_bound: f64, format: FixedFormat) -> Option<String> {
    let worst = points as f64 * std::f64::consts::SQRT_2 * x_bound;
    (worst >= format.limit()).then(|| {
        format!(
            "outputs may reach {worst:.1} but {format} only represents magnitudes below {}",
            format.limit()
        )
    })
}
