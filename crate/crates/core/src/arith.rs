//! Two's-complement fixed-point arithmetic built from NAND circuits.
//!
//! Words are LSB-first vectors of [`Bit`]s. A [`FixedFormat`] with `F` total
//! and `f` fractional bits represents `value = signed(bits) / 2^f`. Addition
//! and subtraction are ripple-carry and wrap silently on overflow.
//! Multiplication sign-extends both operands to `2F` bits, reduces the
//! AND-gate partial products with a Wallace tree of carry-save adders, and
//! finishes with a ripple adder; fixed-point products keep bits `[f, f + F)`
//! of the `2F`-bit result (an arithmetic shift right by `f`, i.e. truncation
//! toward negative infinity).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Bit, BitEngine, EngineError};
use crate::gates;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArithError {
    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),
    #[error("{value} is outside the range of {format}")]
    Range { value: f64, format: FixedFormat },
    #[error("format mismatch: {0} vs {1}")]
    FormatMismatch(FixedFormat, FixedFormat),
    #[error("expected {expected} bits, got {found}")]
    Width { expected: usize, found: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

type Result<T> = std::result::Result<T, ArithError>;

/// `F` total bits, `f` of them fractional.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FormatSpec", into = "FormatSpec")]
pub struct FixedFormat {
    total: u32,
    frac: u32,
}

#[derive(Serialize, Deserialize)]
struct FormatSpec {
    total_bits: u32,
    frac_bits: u32,
}

impl TryFrom<FormatSpec> for FixedFormat {
    type Error = ArithError;
    fn try_from(s: FormatSpec) -> Result<Self> {
        FixedFormat::new(s.total_bits, s.frac_bits)
    }
}

impl From<FixedFormat> for FormatSpec {
    fn from(f: FixedFormat) -> Self {
        FormatSpec {
            total_bits: f.total,
            frac_bits: f.frac,
        }
    }
}

impl std::fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Q(F={}, f={})", self.total, self.frac)
    }
}

impl FixedFormat {
    pub const MAX_BITS: u32 = 62;

    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if frac_bits == 0 || frac_bits >= total_bits || total_bits > Self::MAX_BITS {
            return Err(ArithError::InvalidFormat(format!(
                "need 0 < f < F <= {}, got F={total_bits}, f={frac_bits}",
                Self::MAX_BITS
            )));
        }
        Ok(Self {
            total: total_bits,
            frac: frac_bits,
        })
    }

    pub fn total_bits(&self) -> u32 {
        self.total
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac
    }

    pub fn width(&self) -> usize {
        self.total as usize
    }

    /// `2^f`.
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac) as f64
    }

    /// Quantization step `2^-f`.
    pub fn delta(&self) -> f64 {
        1.0 / self.scale()
    }

    /// Encodable reals satisfy `|x| < 2^(F - f - 1)`.
    pub fn limit(&self) -> f64 {
        (1u64 << (self.total - self.frac - 1)) as f64
    }

    pub fn min_int(&self) -> i64 {
        -(1i64 << (self.total - 1))
    }

    pub fn max_int(&self) -> i64 {
        (1i64 << (self.total - 1)) - 1
    }

    /// `round(x * 2^f)`.
    pub fn encode_int(&self, x: f64) -> Result<i64> {
        if !x.is_finite() || x.abs() >= self.limit() {
            return Err(ArithError::Range {
                value: x,
                format: *self,
            });
        }
        let v = (x * self.scale()).round() as i64;
        if v < self.min_int() || v > self.max_int() {
            return Err(ArithError::Range {
                value: x,
                format: *self,
            });
        }
        Ok(v)
    }

    /// Reduces an integer into the `F`-bit two's-complement range.
    pub fn wrap_int(&self, v: i128) -> i64 {
        let m = 1i128 << self.total;
        let r = v.rem_euclid(m);
        (if r >= m / 2 { r - m } else { r }) as i64
    }

    pub fn int_to_real(&self, v: i64) -> f64 {
        v as f64 / self.scale()
    }
}

/// LSB-first two's-complement encoding of `x`.
pub fn encode(x: f64, format: FixedFormat) -> Result<Vec<bool>> {
    Ok(int_to_bits(format.encode_int(x)?, format.width()))
}

pub fn decode(bits: &[bool], format: FixedFormat) -> Result<f64> {
    if bits.len() != format.width() {
        return Err(ArithError::Width {
            expected: format.width(),
            found: bits.len(),
        });
    }
    Ok(format.int_to_real(bits_to_int(bits)))
}

pub fn int_to_bits(v: i64, width: usize) -> Vec<bool> {
    (0..width).map(|i| (v >> i.min(63)) & 1 == 1).collect()
}

/// Sign-extending read of an LSB-first word of at most 64 bits.
pub fn bits_to_int(bits: &[bool]) -> i64 {
    let mut v = 0i64;
    for (i, &b) in bits.iter().enumerate() {
        if b {
            v |= 1 << i;
        }
    }
    let w = bits.len();
    if w > 0 && w < 64 && bits[w - 1] {
        v |= !0i64 << w;
    }
    v
}

/// A fixed-point number as a vector of engine bits.
#[derive(Clone, Debug)]
pub struct FixedWord {
    bits: Vec<Bit>,
    format: FixedFormat,
}

impl FixedWord {
    pub fn from_bits(bits: Vec<Bit>, format: FixedFormat) -> Result<Self> {
        if bits.len() != format.width() {
            return Err(ArithError::Width {
                expected: format.width(),
                found: bits.len(),
            });
        }
        Ok(Self { bits, format })
    }

    /// Private input word: each bit goes through `engine.input`.
    pub fn input<E: BitEngine + ?Sized>(e: &E, x: f64, format: FixedFormat) -> Result<Self> {
        Self::input_int(e, format.encode_int(x)?, format)
    }

    pub fn input_int<E: BitEngine + ?Sized>(e: &E, v: i64, format: FixedFormat) -> Result<Self> {
        let bits = int_to_bits(v, format.width())
            .into_iter()
            .map(|b| e.input(b))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { bits, format })
    }

    /// Public constant word.
    pub fn constant(x: f64, format: FixedFormat) -> Result<Self> {
        Ok(Self::constant_int(format.encode_int(x)?, format))
    }

    pub fn constant_int(v: i64, format: FixedFormat) -> Self {
        Self {
            bits: int_to_bits(v, format.width())
                .into_iter()
                .map(Bit::constant)
                .collect(),
            format,
        }
    }

    pub fn zero(format: FixedFormat) -> Self {
        Self::constant_int(0, format)
    }

    pub fn bits(&self) -> &[Bit] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<Bit> {
        self.bits
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn read_bits<E: BitEngine + ?Sized>(&self, e: &E) -> Result<Vec<bool>> {
        Ok(self
            .bits
            .iter()
            .map(|b| e.read_back(b))
            .collect::<std::result::Result<Vec<_>, _>>()?)
    }

    pub fn read_int<E: BitEngine + ?Sized>(&self, e: &E) -> Result<i64> {
        Ok(bits_to_int(&self.read_bits(e)?))
    }

    pub fn read<E: BitEngine + ?Sized>(&self, e: &E) -> Result<f64> {
        Ok(self.format.int_to_real(self.read_int(e)?))
    }
}

fn same_format(x: &FixedWord, y: &FixedWord) -> Result<FixedFormat> {
    if x.format != y.format {
        return Err(ArithError::FormatMismatch(x.format, y.format));
    }
    Ok(x.format)
}

/// `(a XOR b, a AND b)`; 5 NANDs on wires, sharing `NAND(a, b)`.
pub fn half_adder<E: BitEngine + ?Sized>(e: &E, a: &Bit, b: &Bit) -> Result<(Bit, Bit)> {
    let (s, c) = half_adder_inner(e, a, b, true)?;
    Ok((s, c.expect("carry requested")))
}

/// `(a XOR b XOR cin, majority(a, b, cin))`; 9 NANDs on wires.
///
/// Two half adders and an OR gate. Written in NAND form the half adders
/// expose their carries inverted, and the OR's input inverters cancel them:
/// `carry = NAND(NAND(a, b), NAND(a XOR b, cin))`.
pub fn full_adder<E: BitEngine + ?Sized>(e: &E, a: &Bit, b: &Bit, cin: &Bit) -> Result<(Bit, Bit)> {
    let (s, c) = full_adder_inner(e, a, b, cin, true)?;
    Ok((s, c.expect("carry requested")))
}

fn half_adder_inner<E: BitEngine + ?Sized>(
    e: &E,
    a: &Bit,
    b: &Bit,
    want_carry: bool,
) -> Result<(Bit, Option<Bit>)> {
    if a.is_const() || b.is_const() {
        let carry = if want_carry {
            Some(gates::and(e, a, b)?)
        } else {
            None
        };
        return Ok((gates::xor(e, a, b)?, carry));
    }
    let t1 = e.nand(a, b)?;
    let u = e.nand(a, &t1)?;
    let v = e.nand(b, &t1)?;
    let sum = e.nand(&u, &v)?;
    let carry = if want_carry {
        Some(gates::not(e, &t1)?)
    } else {
        None
    };
    Ok((sum, carry))
}

fn full_adder_inner<E: BitEngine + ?Sized>(
    e: &E,
    a: &Bit,
    b: &Bit,
    cin: &Bit,
    want_carry: bool,
) -> Result<(Bit, Option<Bit>)> {
    // full addition is symmetric; route a constant operand to the carry slot
    let (a, b, c) = if a.is_const() {
        (b, cin, a)
    } else if b.is_const() {
        (a, cin, b)
    } else {
        (a, b, cin)
    };
    match c.as_const() {
        Some(false) => half_adder_inner(e, a, b, want_carry),
        Some(true) if a.is_const() || b.is_const() => {
            let carry = if want_carry {
                Some(gates::or(e, a, b)?)
            } else {
                None
            };
            Ok((gates::xnor(e, a, b)?, carry))
        }
        Some(true) => {
            let t1 = e.nand(a, b)?;
            let u = e.nand(a, &t1)?;
            let v = e.nand(b, &t1)?;
            let s1 = e.nand(&u, &v)?;
            let ns1 = e.negate(&s1)?;
            let carry = if want_carry {
                Some(e.nand(&t1, &ns1)?)
            } else {
                None
            };
            Ok((ns1, carry))
        }
        None => {
            let t1 = e.nand(a, b)?;
            let u = e.nand(a, &t1)?;
            let v = e.nand(b, &t1)?;
            let s1 = e.nand(&u, &v)?;
            let t4 = e.nand(&s1, c)?;
            let w = e.nand(&s1, &t4)?;
            let z = e.nand(c, &t4)?;
            let sum = e.nand(&w, &z)?;
            let carry = if want_carry {
                Some(e.nand(&t1, &t4)?)
            } else {
                None
            };
            Ok((sum, carry))
        }
    }
}

/// Ripple-carry sum of two equal-width words with carry-in; the carry out of
/// the top bit is dropped.
pub fn ripple_add<E: BitEngine + ?Sized>(e: &E, x: &[Bit], y: &[Bit], cin: &Bit) -> Result<Vec<Bit>> {
    if x.len() != y.len() {
        return Err(ArithError::Width {
            expected: x.len(),
            found: y.len(),
        });
    }
    let mut carry = cin.clone();
    let mut out = Vec::with_capacity(x.len());
    for (i, (a, b)) in x.iter().zip(y).enumerate() {
        let last = i + 1 == x.len();
        let (s, c) = full_adder_inner(e, a, b, &carry, !last)?;
        out.push(s);
        if let Some(c) = c {
            carry = c;
        }
    }
    Ok(out)
}

/// `x + y`, wrapping.
pub fn add<E: BitEngine + ?Sized>(e: &E, x: &FixedWord, y: &FixedWord) -> Result<FixedWord> {
    let format = same_format(x, y)?;
    let bits = ripple_add(e, &x.bits, &y.bits, &Bit::ZERO)?;
    Ok(FixedWord { bits, format })
}

/// `x - y` as `x + NOT(y) + 1`, wrapping.
pub fn sub<E: BitEngine + ?Sized>(e: &E, x: &FixedWord, y: &FixedWord) -> Result<FixedWord> {
    let format = same_format(x, y)?;
    let inverted = y
        .bits
        .iter()
        .map(|b| gates::not(e, b))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let bits = ripple_add(e, &x.bits, &inverted, &Bit::ONE)?;
    Ok(FixedWord { bits, format })
}

fn sign_extend(bits: &[Bit], width: usize) -> Vec<Bit> {
    let sign = bits.last().cloned().unwrap_or(Bit::ZERO);
    let mut out = bits.to_vec();
    out.resize(width, sign);
    out
}

/// Low `width` bits of `x * y` via a Wallace tree.
fn wallace_product<E: BitEngine + ?Sized>(e: &E, x: &[Bit], y: &[Bit], width: usize) -> Result<Vec<Bit>> {
    let mut columns: Vec<Vec<Bit>> = vec![Vec::new(); width];
    for (j, yj) in y.iter().enumerate().take(width) {
        if yj.as_const() == Some(false) {
            continue;
        }
        for (i, xi) in x.iter().enumerate().take(width - j) {
            let pp = gates::and(e, xi, yj)?;
            if pp.as_const() != Some(false) {
                columns[i + j].push(pp);
            }
        }
    }

    while columns.iter().any(|c| c.len() > 2) {
        let mut next: Vec<Vec<Bit>> = vec![Vec::new(); width];
        for (c, column) in columns.iter().enumerate() {
            if column.len() <= 2 {
                next[c].extend(column.iter().cloned());
                continue;
            }
            let carry_kept = c + 1 < width;
            for group in column.chunks(3) {
                let (sum, carry) = match group {
                    [a, b, cin] => full_adder_inner(e, a, b, cin, carry_kept)?,
                    [a, b] => half_adder_inner(e, a, b, carry_kept)?,
                    [a] => (a.clone(), None),
                    _ => unreachable!(),
                };
                if sum.as_const() != Some(false) {
                    next[c].push(sum);
                }
                if let Some(k) = carry.filter(|k| k.as_const() != Some(false)) {
                    next[c + 1].push(k);
                }
            }
        }
        columns = next;
    }

    let row = |k: usize| -> Vec<Bit> {
        columns
            .iter()
            .map(|c| c.get(k).cloned().unwrap_or(Bit::ZERO))
            .collect()
    };
    ripple_add(e, &row(0), &row(1), &Bit::ZERO)
}

/// Integer product keeping the low `F` bits.
pub fn mul_integer<E: BitEngine + ?Sized>(e: &E, x: &FixedWord, y: &FixedWord) -> Result<FixedWord> {
    let format = same_format(x, y)?;
    let w = format.width();
    let bits = wallace_product(e, &sign_extend(&x.bits, 2 * w), &sign_extend(&y.bits, 2 * w), w)?;
    Ok(FixedWord { bits, format })
}

/// Fixed-point product: bits `[f, f + F)` of the signed `2F`-bit product.
pub fn mul_fixed<E: BitEngine + ?Sized>(e: &E, x: &FixedWord, y: &FixedWord) -> Result<FixedWord> {
    let format = same_format(x, y)?;
    let (w, f) = (format.width(), format.frac_bits() as usize);
    let wide = 2 * w;
    // columns at or above f + F never influence the kept bits
    let product = wallace_product(e, &sign_extend(&x.bits, wide), &sign_extend(&y.bits, wide), f + w)?;
    Ok(FixedWord {
        bits: product[f..f + w].to_vec(),
        format,
    })
}

/// Product with a public constant; zero partial-product rows fold away.
pub fn mul_const<E: BitEngine + ?Sized>(e: &E, x: &FixedWord, c: f64) -> Result<FixedWord> {
    let k = FixedWord::constant(c, x.format)?;
    mul_fixed(e, x, &k)
}

/// As [`mul_const`] with the constant already encoded as `round(c * 2^f)`.
pub fn mul_const_int<E: BitEngine + ?Sized>(e: &E, x: &FixedWord, c: i64) -> Result<FixedWord> {
    mul_fixed(e, x, &FixedWord::constant_int(c, x.format))
}
