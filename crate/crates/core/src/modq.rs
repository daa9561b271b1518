//! Arithmetic in Z_q for pseudo-Mersenne moduli q = 2^ell - c.
//!
//! Residues are little-endian `u64` limb vectors. Reduction folds the bits
//! above position `ell` back in multiplied by `c`, so moduli from a few dozen
//! bits up to several hundred bits share one code path.

use std::cmp::Ordering;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fhe::FheError;

/// Largest supported `ell`; keeps residues representable as finite `f64`.
pub const MAX_BITS: u32 = 1000;

/// A value in `[0, q)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Residue(Vec<u64>);

impl Residue {
    pub fn limbs(&self) -> &[u64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    /// Bit `i`, LSB first.
    pub fn bit(&self, i: u32) -> bool {
        let (w, b) = ((i / 64) as usize, i % 64);
        w < self.0.len() && (self.0[w] >> b) & 1 == 1
    }

    pub fn to_biguint(&self) -> BigUint {
        let mut bytes = Vec::with_capacity(self.0.len() * 8);
        for w in &self.0 {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        BigUint::from_bytes_le(&bytes)
    }
}

/// The modulus `q = 2^ell - c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ModulusSpec", into = "ModulusSpec")]
pub struct Modulus {
    ell: u32,
    c: u64,
    limbs: usize,
    q: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct ModulusSpec {
    q_bits: u32,
    q_offset: u64,
}

impl TryFrom<ModulusSpec> for Modulus {
    type Error = FheError;
    fn try_from(s: ModulusSpec) -> Result<Self, FheError> {
        Modulus::new(s.q_bits, s.q_offset)
    }
}

impl From<Modulus> for ModulusSpec {
    fn from(m: Modulus) -> Self {
        ModulusSpec {
            q_bits: m.ell,
            q_offset: m.c,
        }
    }
}

impl Modulus {
    /// `q = 2^ell - c` with `c` odd and below both `2^32` and `2^(ell-1)`.
    pub fn new(ell: u32, c: u64) -> Result<Self, FheError> {
        if !(8..=MAX_BITS).contains(&ell) {
            return Err(FheError::InvalidParams(format!(
                "modulus bit length {ell} outside 8..={MAX_BITS}"
            )));
        }
        if c.is_multiple_of(2) || c >= 1 << 32 || c >= 1u64 << (ell - 1).min(63) {
            return Err(FheError::InvalidParams(format!(
                "modulus offset {c} must be odd and small (q = 2^{ell} - {c})"
            )));
        }
        let limbs = ell.div_ceil(64) as usize;
        let mut q = vec![0u64; limbs];
        // 2^ell - c == (2^ell - 1) - (c - 1)
        for (i, w) in q.iter_mut().enumerate() {
            let bits = (ell as usize).saturating_sub(i * 64).min(64);
            *w = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        }
        q[0] -= c - 1;
        Ok(Self { ell, c, limbs, q })
    }

    /// Bit length `ell = ceil(log2 q)`.
    pub fn bits(&self) -> u32 {
        self.ell
    }

    pub fn offset(&self) -> u64 {
        self.c
    }

    pub fn limb_count(&self) -> usize {
        self.limbs
    }

    pub fn value(&self) -> Residue {
        Residue(self.q.clone())
    }

    pub fn as_f64(&self) -> f64 {
        limbs_to_f64(&self.q)
    }

    pub fn log2(&self) -> f64 {
        // q is within c of 2^ell
        self.ell as f64 + (1.0 - self.c as f64 / 2f64.powi(self.ell as i32)).log2()
    }

    pub fn zero(&self) -> Residue {
        Residue(vec![0; self.limbs])
    }

    pub fn from_u64(&self, v: u64) -> Residue {
        self.reduce(vec![v])
    }

    pub fn from_i64(&self, v: i64) -> Residue {
        let r = self.from_u64(v.unsigned_abs());
        if v < 0 {
            self.neg(&r)
        } else {
            r
        }
    }

    pub fn from_biguint(&self, v: &BigUint) -> Residue {
        self.reduce(v.to_u64_digits())
    }

    /// Canonical residue from exactly `limb_count` little-endian limbs, or
    /// `None` when the value is not below `q`.
    pub fn from_limbs(&self, limbs: &[u64]) -> Option<Residue> {
        (limbs.len() == self.limbs && cmp_limbs(limbs, &self.q) == Ordering::Less)
            .then(|| Residue(limbs.to_vec()))
    }

    /// Uniform residue by rejection sampling.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Residue {
        loop {
            let mut x: Vec<u64> = (0..self.limbs).map(|_| rng.gen()).collect();
            let top = self.ell as usize - (self.limbs - 1) * 64;
            if top < 64 {
                x[self.limbs - 1] &= (1u64 << top) - 1;
            }
            if cmp_limbs(&x, &self.q) == Ordering::Less {
                return Residue(x);
            }
        }
    }

    /// Reduces an arbitrary little-endian limb vector modulo `q`.
    pub fn reduce(&self, mut x: Vec<u64>) -> Residue {
        trim(&mut x);
        while bit_len(&x) > self.ell as usize {
            let (lo, hi) = split_at_bit(&x, self.ell);
            x = add_limbs(&lo, &mul_small(&hi, self.c));
            trim(&mut x);
        }
        while cmp_limbs(&x, &self.q) != Ordering::Less {
            x = sub_limbs(&x, &self.q);
            trim(&mut x);
        }
        x.resize(self.limbs, 0);
        Residue(x)
    }

    pub fn add(&self, a: &Residue, b: &Residue) -> Residue {
        let s = add_limbs(&a.0, &b.0);
        if cmp_limbs(&s, &self.q) != Ordering::Less {
            let mut d = sub_limbs(&s, &self.q);
            d.resize(self.limbs, 0);
            Residue(d)
        } else {
            let mut s = s;
            s.resize(self.limbs, 0);
            Residue(s)
        }
    }

    pub fn sub(&self, a: &Residue, b: &Residue) -> Residue {
        if cmp_limbs(&a.0, &b.0) != Ordering::Less {
            Residue(sub_limbs(&a.0, &b.0))
        } else {
            let t = sub_limbs(&self.q, &b.0);
            self.add(a, &Residue(t))
        }
    }

    pub fn neg(&self, a: &Residue) -> Residue {
        if a.is_zero() {
            a.clone()
        } else {
            Residue(sub_limbs(&self.q, &a.0))
        }
    }

    /// Product via double-and-add over the bits of `b`.
    pub fn mul(&self, a: &Residue, b: &Residue) -> Residue {
        let mut acc = self.zero();
        for i in (0..self.ell).rev() {
            acc = self.add(&acc, &acc);
            if b.bit(i) {
                acc = self.add(&acc, a);
            }
        }
        acc
    }

    /// `2^k mod q`.
    pub fn pow2(&self, k: u32) -> Residue {
        let mut x = vec![0u64; (k / 64) as usize + 1];
        x[(k / 64) as usize] = 1u64 << (k % 64);
        self.reduce(x)
    }

    /// Distance from zero on the circle `Z_q`, i.e. `min(a, q - a)`.
    pub fn centered_abs(&self, a: &Residue) -> f64 {
        let n = self.neg(a);
        if cmp_limbs(&a.0, &n.0) == Ordering::Greater {
            limbs_to_f64(&n.0)
        } else {
            limbs_to_f64(&a.0)
        }
    }

    /// `a / q` as a real number in `[0, 1)`.
    pub fn fraction(&self, a: &Residue) -> f64 {
        let shift = self.ell.saturating_sub(60);
        let top = |x: &[u64]| limbs_to_f64(&shr_limbs(x, shift));
        top(&a.0) / top(&self.q)
    }
}

/// Sums small shifted integers and whole residues without intermediate
/// reduction, then reduces once.
pub(crate) struct Accumulator {
    lanes: Vec<u128>,
}

impl Accumulator {
    pub(crate) fn new(modulus: &Modulus) -> Self {
        Self {
            lanes: vec![0; modulus.limbs + 1],
        }
    }

    pub(crate) fn clear(&mut self) {
        self.lanes.iter_mut().for_each(|l| *l = 0);
    }

    /// Adds `x * 2^k` for a small `x` (< 2^24). At most 64 additions per
    /// lane between calls to `finish`.
    #[inline]
    pub(crate) fn add_shifted(&mut self, k: u32, x: u64) {
        self.lanes[(k / 64) as usize] += (x as u128) << (k % 64);
    }

    pub(crate) fn add_residue(&mut self, r: &Residue) {
        for (lane, &w) in self.lanes.iter_mut().zip(&r.0) {
            *lane += w as u128;
        }
    }

    pub(crate) fn finish(&self, modulus: &Modulus) -> Residue {
        let mut out = Vec::with_capacity(self.lanes.len() + 2);
        let mut carry: u128 = 0;
        for &lane in &self.lanes {
            let (s, o) = lane.overflowing_add(carry);
            out.push(s as u64);
            carry = (s >> 64) + if o { 1u128 << 64 } else { 0 };
        }
        while carry != 0 {
            out.push(carry as u64);
            carry >>= 64;
        }
        modulus.reduce(out)
    }
}

fn trim(x: &mut Vec<u64>) {
    while x.len() > 1 && *x.last().unwrap() == 0 {
        x.pop();
    }
    if x.is_empty() {
        x.push(0);
    }
}

fn bit_len(x: &[u64]) -> usize {
    for i in (0..x.len()).rev() {
        if x[i] != 0 {
            return i * 64 + 64 - x[i].leading_zeros() as usize;
        }
    }
    0
}

fn cmp_limbs(a: &[u64], b: &[u64]) -> Ordering {
    let n = a.len().max(b.len());
    for i in (0..n).rev() {
        let x = a.get(i).copied().unwrap_or(0);
        let y = b.get(i).copied().unwrap_or(0);
        match x.cmp(&y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn add_limbs(a: &[u64], b: &[u64]) -> Vec<u64> {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n + 1);
    let mut carry = 0u64;
    for i in 0..n {
        let x = a.get(i).copied().unwrap_or(0);
        let y = b.get(i).copied().unwrap_or(0);
        let (s1, o1) = x.overflowing_add(y);
        let (s2, o2) = s1.overflowing_add(carry);
        out.push(s2);
        carry = (o1 as u64) + (o2 as u64);
    }
    if carry != 0 {
        out.push(carry);
    }
    out
}

/// `a - b`, requires `a >= b`. Output has `a.len()` limbs.
fn sub_limbs(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len());
    let mut borrow = 0u64;
    for (i, &x) in a.iter().enumerate() {
        let y = b.get(i).copied().unwrap_or(0);
        let (d1, o1) = x.overflowing_sub(y);
        let (d2, o2) = d1.overflowing_sub(borrow);
        out.push(d2);
        borrow = (o1 as u64) + (o2 as u64);
    }
    debug_assert_eq!(borrow, 0);
    out
}

fn mul_small(a: &[u64], c: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + 1);
    let mut carry = 0u128;
    for &x in a {
        let p = x as u128 * c as u128 + carry;
        out.push(p as u64);
        carry = p >> 64;
    }
    if carry != 0 {
        out.push(carry as u64);
    }
    out
}

fn shr_limbs(x: &[u64], s: u32) -> Vec<u64> {
    let (w, b) = ((s / 64) as usize, s % 64);
    if w >= x.len() {
        return vec![0];
    }
    let mut out: Vec<u64> = Vec::with_capacity(x.len() - w);
    for i in w..x.len() {
        let lo = x[i] >> b;
        let hi = if b > 0 && i + 1 < x.len() {
            x[i + 1] << (64 - b)
        } else {
            0
        };
        out.push(lo | hi);
    }
    out
}

/// Splits into (bits below `k`, bits from `k` up shifted down).
fn split_at_bit(x: &[u64], k: u32) -> (Vec<u64>, Vec<u64>) {
    let (w, b) = ((k / 64) as usize, k % 64);
    let mut lo: Vec<u64> = x.iter().take(w + 1).copied().collect();
    lo.resize(w + 1, 0);
    lo[w] &= if b == 0 { 0 } else { (1u64 << b) - 1 };
    (lo, shr_limbs(x, k))
}

fn limbs_to_f64(x: &[u64]) -> f64 {
    x.iter()
        .rev()
        .fold(0.0, |acc, &w| acc * 18446744073709551616.0 + w as f64)
}
