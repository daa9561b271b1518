//! Leveled GSW encryption with flattened bit-matrix ciphertexts.
//!
//! A ciphertext is an `N x N` matrix `C` over `{0, 1}` with `N = (n + 1) * ell`
//! such that `C * v = mu * v + e (mod q)`, where `v = PowersOf2(s)` is the
//! bit-decomposition-expanded secret key and `e` is small. Every operation
//! re-flattens its integer result so entries stay binary, which is what keeps
//! noise growth bounded by the matrix side length.
//!
//! There is no refresh (bootstrapping): circuits are limited by the noise
//! budget. Each ciphertext carries its NAND depth and a worst-case noise
//! ceiling. Under [`DepthPolicy::Strict`] evaluation fails fast once the depth
//! passes the worst-case budget; decryption always measures the actual noise
//! and refuses results at or above `q / 8`.
//!
//! Parameters here are desk-scale toys and provide no real security.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bitmatrix::BitMatrix;
use crate::modq::{Accumulator, Modulus, Residue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FheError {
    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),
    #[error("noise overflow: {0}")]
    NoiseOverflow(String),
    #[error("shape mismatch: {0}")]
    Mismatch(String),
}

/// Scheme parameters. `q = 2^q_bits - q_offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// LWE dimension.
    pub n: usize,
    #[serde(flatten)]
    pub modulus: Modulus,
    /// Number of LWE samples in the public key.
    pub m: usize,
    /// Per-sample error is uniform in `[-noise_bound, noise_bound]`.
    pub noise_bound: u64,
    /// NAND depth for which decryption is guaranteed under worst-case growth.
    pub depth_budget: u32,
    #[serde(default)]
    pub depth_policy: DepthPolicy,
}

/// How evaluation treats circuits deeper than `depth_budget`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthPolicy {
    /// Gates whose output level would exceed `depth_budget` fail with
    /// [`FheError::NoiseOverflow`].
    #[default]
    Strict,
    /// No level limit at evaluation time. Correctness rests on the measured
    /// noise check performed at decryption, which is far less pessimistic
    /// than the worst-case budget.
    Measured,
}

impl SchemeParams {
    /// `n = 8`, `q = 2^29 - 3`, `noise_bound = 2`, `m = N`, with the largest
    /// depth budget the worst-case bound admits.
    pub fn toy() -> Self {
        Self::with_max_budget(8, 29, 3, 2, None).expect("toy parameters are valid")
    }

    /// Builds parameters with `m` defaulting to `N`, and the largest depth
    /// budget that still satisfies [`SchemeParams::validate`].
    pub fn with_max_budget(
        n: usize,
        q_bits: u32,
        q_offset: u64,
        noise_bound: u64,
        m: Option<usize>,
    ) -> Result<Self, FheError> {
        let modulus = Modulus::new(q_bits, q_offset)?;
        let mut p = Self {
            n,
            m: m.unwrap_or((n + 1) * q_bits as usize),
            modulus,
            noise_bound,
            depth_budget: 0,
            depth_policy: DepthPolicy::Strict,
        };
        p.validate()?;
        while p.budget_holds(p.depth_budget + 1) {
            p.depth_budget += 1;
        }
        Ok(p)
    }

    pub fn with_policy(mut self, policy: DepthPolicy) -> Self {
        self.depth_policy = policy;
        self
    }

    pub fn q(&self) -> &Modulus {
        &self.modulus
    }

    pub fn ell(&self) -> usize {
        self.modulus.bits() as usize
    }

    /// Ciphertext side length `N = (n + 1) * ell`.
    pub fn n_ct(&self) -> usize {
        (self.n + 1) * self.ell()
    }

    /// Worst-case noise magnitude of a fresh encryption, `m * noise_bound`.
    pub fn fresh_noise(&self) -> f64 {
        self.m as f64 * self.noise_bound as f64
    }

    /// Decryption is correct while every noise coordinate stays below `q / 8`.
    pub fn noise_threshold(&self) -> f64 {
        self.modulus.as_f64() / 8.0
    }

    fn budget_holds(&self, depth: u32) -> bool {
        let lhs = self.modulus.log2();
        let rhs = 3.0 + self.fresh_noise().log2() + depth as f64 * ((self.n_ct() + 1) as f64).log2();
        lhs > rhs
    }

    /// Checks `q > 8 * fresh_noise * (N + 1)^depth_budget`.
    pub fn validate(&self) -> Result<(), FheError> {
        if self.n == 0 || self.m == 0 || self.noise_bound == 0 {
            return Err(FheError::InvalidParams(
                "n, m and noise_bound must be positive".into(),
            ));
        }
        if !self.budget_holds(self.depth_budget) {
            return Err(FheError::InvalidParams(format!(
                "q = 2^{} - {} too small: need q > 8 * {} * {}^{}",
                self.modulus.bits(),
                self.modulus.offset(),
                self.fresh_noise(),
                self.n_ct() + 1,
                self.depth_budget
            )));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("params serialize");
        Sha256::digest(&json).into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PublicKey {
    params: SchemeParams,
    /// `m` rows of `n + 1` residues, `[A | A t + e]`.
    rows: Vec<Vec<Residue>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecretKey {
    params: SchemeParams,
    /// `(-t, 1)`.
    s: Vec<Residue>,
    /// `PowersOf2(s)`, length `N`.
    powers: Vec<Residue>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    matrix: BitMatrix,
    level: u32,
    noise_ceiling: f64,
}

impl Ciphertext {
    pub fn from_parts(matrix: BitMatrix, level: u32, noise_ceiling: f64) -> Self {
        Self {
            matrix,
            level,
            noise_ceiling,
        }
    }

    pub fn matrix(&self) -> &BitMatrix {
        &self.matrix
    }

    /// Accumulated NAND depth.
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Worst-case bound on the noise magnitude, valid for binary plaintexts.
    pub fn noise_ceiling(&self) -> f64 {
        self.noise_ceiling
    }
}

/// Deterministic key generation from `seed`.
pub fn keygen(params: &SchemeParams, seed: u64) -> Result<KeyPair, FheError> {
    params.validate()?;
    let q = params.q();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let t: Vec<Residue> = (0..params.n).map(|_| q.random(&mut rng)).collect();
    let bound = params.noise_bound as i64;
    let mut rows = Vec::with_capacity(params.m);
    for _ in 0..params.m {
        let a: Vec<Residue> = (0..params.n).map(|_| q.random(&mut rng)).collect();
        let e = q.from_i64(rng.gen_range(-bound..=bound));
        let b = a
            .iter()
            .zip(&t)
            .fold(e, |acc, (ai, ti)| q.add(&acc, &q.mul(ai, ti)));
        let mut row = a;
        row.push(b);
        rows.push(row);
    }
    let mut s: Vec<Residue> = t.iter().map(|ti| q.neg(ti)).collect();
    s.push(q.from_u64(1));
    let secret = SecretKey::from_vector(params.clone(), s)?;
    Ok(KeyPair {
        public: PublicKey {
            params: params.clone(),
            rows,
        },
        secret,
    })
}

impl PublicKey {
    pub fn from_rows(params: SchemeParams, rows: Vec<Vec<Residue>>) -> Result<Self, FheError> {
        if rows.len() != params.m || rows.iter().any(|r| r.len() != params.n + 1) {
            return Err(FheError::Mismatch("public key shape".into()));
        }
        Ok(Self { params, rows })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn rows(&self) -> &[Vec<Residue>] {
        &self.rows
    }

    pub fn encrypt_bit<R: Rng + ?Sized>(&self, bit: bool, rng: &mut R) -> Ciphertext {
        let q = self.params.q();
        let mu = if bit { q.from_u64(1) } else { q.zero() };
        self.encrypt_residue(&mu, rng)
    }

    /// `Flatten(mu * I + BitDecomp(R * B))` for a uniform binary `R`.
    pub fn encrypt_residue<R: Rng + ?Sized>(&self, mu: &Residue, rng: &mut R) -> Ciphertext {
        let p = &self.params;
        let q = p.q();
        let (ell, width, big_n) = (p.ell(), p.n + 1, p.n_ct());
        let mut mu_pow = Vec::with_capacity(ell);
        let mut x = mu.clone();
        for _ in 0..ell {
            mu_pow.push(x.clone());
            x = q.add(&x, &x);
        }
        let mut accs: Vec<Accumulator> = (0..width).map(|_| Accumulator::new(q)).collect();
        let mut matrix = BitMatrix::zeros(big_n, big_n);
        let mut mask = vec![0u64; self.rows.len().div_ceil(64)];
        for r in 0..big_n {
            accs.iter_mut().for_each(Accumulator::clear);
            mask.iter_mut().for_each(|w| *w = rng.gen());
            for (i, pk_row) in self.rows.iter().enumerate() {
                if (mask[i / 64] >> (i % 64)) & 1 == 1 {
                    for (acc, v) in accs.iter_mut().zip(pk_row) {
                        acc.add_residue(v);
                    }
                }
            }
            let row = matrix.row_mut(r);
            for (j, acc) in accs.iter().enumerate() {
                let mut value = acc.finish(q);
                if j == r / ell {
                    value = q.add(&value, &mu_pow[r % ell]);
                }
                write_bits(row, j * ell, &value, ell);
            }
        }
        Ciphertext {
            matrix,
            level: 0,
            noise_ceiling: p.fresh_noise(),
        }
    }
}

impl SecretKey {
    pub fn from_vector(params: SchemeParams, s: Vec<Residue>) -> Result<Self, FheError> {
        if s.len() != params.n + 1 {
            return Err(FheError::Mismatch("secret key length".into()));
        }
        let q = params.q();
        let mut powers = Vec::with_capacity(params.n_ct());
        for sj in &s {
            let mut x = sj.clone();
            for _ in 0..params.ell() {
                powers.push(x.clone());
                x = q.add(&x, &x);
            }
        }
        Ok(Self { params, s, powers })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn vector(&self) -> &[Residue] {
        &self.s
    }

    fn check_shape(&self, ct: &Ciphertext) -> Result<(), FheError> {
        let big_n = self.params.n_ct();
        if ct.matrix.rows() != big_n || ct.matrix.cols() != big_n {
            return Err(FheError::Mismatch(format!(
                "ciphertext is {}x{}, key expects {big_n}x{big_n}",
                ct.matrix.rows(),
                ct.matrix.cols()
            )));
        }
        Ok(())
    }

    /// `<C_r, v> mod q`.
    fn row_inner(&self, ct: &Ciphertext, r: usize) -> Residue {
        let q = self.params.q();
        let mut acc = Accumulator::new(q);
        for (wi, &word) in ct.matrix.row(r).iter().enumerate() {
            let mut w = word;
            while w != 0 {
                acc.add_residue(&self.powers[wi * 64 + w.trailing_zeros() as usize]);
                w &= w - 1;
            }
        }
        acc.finish(q)
    }

    /// Largest centered coordinate of `C v - mu v`, the noise under the
    /// hypothesis that `ct` encrypts `mu`.
    pub fn noise(&self, ct: &Ciphertext, mu: &Residue) -> Result<f64, FheError> {
        self.check_shape(ct)?;
        let q = self.params.q();
        let one = mu == &q.from_u64(1);
        let mut worst = 0.0f64;
        for r in 0..self.params.n_ct() {
            let x = self.row_inner(ct, r);
            let expect = if mu.is_zero() {
                q.zero()
            } else if one {
                self.powers[r].clone()
            } else {
                q.mul(mu, &self.powers[r])
            };
            worst = worst.max(q.centered_abs(&q.sub(&x, &expect)));
        }
        Ok(worst)
    }

    fn check_noise(&self, ct: &Ciphertext, mu: &Residue) -> Result<f64, FheError> {
        if self.params.depth_policy == DepthPolicy::Strict && ct.level > self.params.depth_budget {
            return Err(FheError::NoiseOverflow(format!(
                "ciphertext level {} exceeds the depth budget {}",
                ct.level, self.params.depth_budget
            )));
        }
        let noise = self.noise(ct, mu)?;
        let threshold = self.params.noise_threshold();
        if noise >= threshold {
            return Err(FheError::NoiseOverflow(format!(
                "measured noise 2^{:.1} reaches q/8 = 2^{:.1} (level {}); \
                 the circuit exceeds the noise budget or the key does not match",
                noise.log2(),
                threshold.log2(),
                ct.level
            )));
        }
        Ok(noise)
    }

    /// Decrypts a binary plaintext and returns it with the measured noise.
    pub fn decrypt_bit_with_noise(&self, ct: &Ciphertext) -> Result<(bool, f64), FheError> {
        self.check_shape(ct)?;
        let q = self.params.q();
        let ell = self.params.ell();
        // the row whose key coordinate is 2^(ell-2), roughly q/4
        let r = self.params.n * ell + ell - 2;
        let x = self.row_inner(ct, r);
        let quarter = q.pow2(ell as u32 - 2);
        let bit = q.centered_abs(&q.sub(&x, &quarter)) < q.centered_abs(&x);
        let mu = if bit { q.from_u64(1) } else { q.zero() };
        let noise = self.check_noise(ct, &mu)?;
        Ok((bit, noise))
    }

    pub fn decrypt_bit(&self, ct: &Ciphertext) -> Result<bool, FheError> {
        self.decrypt_bit_with_noise(ct).map(|(b, _)| b)
    }

    /// Decrypts an arbitrary `Z_q` plaintext from the `ell` rows whose key
    /// coordinates are `1, 2, 4, ..., 2^(ell-1)`, recovering the binary
    /// expansion of `mu / q` from the most significant row down.
    pub fn decrypt_residue(&self, ct: &Ciphertext) -> Result<Residue, FheError> {
        self.check_shape(ct)?;
        let q = self.params.q();
        let ell = self.params.ell();
        let base = self.params.n * ell;
        let ys: Vec<Residue> = (0..ell).map(|k| self.row_inner(ct, base + k)).collect();
        let circ = |x: f64| {
            let f = x.rem_euclid(1.0);
            f.min(1.0 - f)
        };
        let mut a = q.fraction(&ys[ell - 1]);
        let mut digits = BigUint::from(0u8);
        for k in (0..ell - 1).rev() {
            let target = q.fraction(&ys[k]);
            let (c0, c1) = (a / 2.0, (a + 1.0) / 2.0);
            let pick = circ(c1 - target) < circ(c0 - target);
            a = if pick { c1 } else { c0 };
            if pick {
                digits |= BigUint::from(1u8) << (ell - 2 - k);
            }
        }
        let qb = q.value().to_biguint();
        let num = &qb * digits + ys[ell - 1].to_biguint() + (BigUint::from(1u8) << (ell - 2));
        let mu = q.from_biguint(&(num >> (ell - 1)));
        self.check_noise(ct, &mu)?;
        Ok(mu)
    }
}

/// Homomorphic evaluation under one parameter set.
#[derive(Clone, Debug)]
pub struct Evaluator {
    params: SchemeParams,
}

impl Evaluator {
    pub fn new(params: SchemeParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    fn check(&self, ct: &Ciphertext) -> Result<(), FheError> {
        let big_n = self.params.n_ct();
        if ct.matrix.rows() != big_n || ct.matrix.cols() != big_n {
            return Err(FheError::Mismatch(format!(
                "ciphertext side {} does not match parameters ({big_n})",
                ct.matrix.rows()
            )));
        }
        Ok(())
    }

    fn guard(&self, level: u32) -> Result<(), FheError> {
        if self.params.depth_policy == DepthPolicy::Strict && level > self.params.depth_budget {
            return Err(FheError::NoiseOverflow(format!(
                "NAND depth {level} exceeds the depth budget {}",
                self.params.depth_budget
            )));
        }
        Ok(())
    }

    /// `Flatten(X)` where row `r` of the integer matrix `X` is produced by
    /// `fill`. Entries must stay below `2^24` in magnitude.
    fn flatten_rows(&self, mut fill: impl FnMut(usize, &mut [i64])) -> BitMatrix {
        let q = self.params.q();
        let (ell, width, big_n) = (self.params.ell(), self.params.n + 1, self.params.n_ct());
        let mut out = BitMatrix::zeros(big_n, big_n);
        let mut buf = vec![0i64; big_n];
        let mut pos = Accumulator::new(q);
        let mut neg = Accumulator::new(q);
        for r in 0..big_n {
            fill(r, &mut buf);
            let row = out.row_mut(r);
            for j in 0..width {
                pos.clear();
                neg.clear();
                for (k, &x) in buf[j * ell..(j + 1) * ell].iter().enumerate() {
                    if x > 0 {
                        pos.add_shifted(k as u32, x as u64);
                    } else if x < 0 {
                        neg.add_shifted(k as u32, x.unsigned_abs());
                    }
                }
                let value = q.sub(&pos.finish(q), &neg.finish(q));
                write_bits(row, j * ell, &value, ell);
            }
        }
        out
    }

    /// `Flatten(I - C1 * C2)`. The operand with the larger noise ceiling is
    /// placed on the left, where its noise is scaled by the other plaintext
    /// bit instead of by `N`.
    pub fn hom_nand(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, FheError> {
        self.check(a)?;
        self.check(b)?;
        let (left, right) = if a.noise_ceiling >= b.noise_ceiling {
            (a, b)
        } else {
            (b, a)
        };
        let level = a.level.max(b.level) + 1;
        let ceiling = left.noise_ceiling + self.params.n_ct() as f64 * right.noise_ceiling;
        self.guard(level)?;
        let rt = right.matrix.transpose();
        let mut prod = vec![0u32; self.params.n_ct()];
        let matrix = self.flatten_rows(|r, buf| {
            left.matrix.product_row(r, &rt, &mut prod);
            for (slot, &p) in buf.iter_mut().zip(&prod) {
                *slot = -(p as i64);
            }
            buf[r] += 1;
        });
        Ok(Ciphertext {
            matrix,
            level,
            noise_ceiling: ceiling,
        })
    }

    /// `Flatten(I - C)`: logical negation with no noise growth.
    pub fn hom_not(&self, a: &Ciphertext) -> Result<Ciphertext, FheError> {
        self.check(a)?;
        let matrix = self.flatten_rows(|r, buf| {
            let row = a.matrix.row(r);
            for (c, slot) in buf.iter_mut().enumerate() {
                *slot = -(((row[c / 64] >> (c % 64)) & 1) as i64);
            }
            buf[r] += 1;
        });
        Ok(Ciphertext {
            matrix,
            level: a.level,
            noise_ceiling: a.noise_ceiling,
        })
    }

    /// `Flatten(C1 + C2)`: plaintexts add in `Z_q`.
    pub fn hom_add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, FheError> {
        self.check(a)?;
        self.check(b)?;
        let matrix = self.flatten_rows(|r, buf| {
            let (ra, rb) = (a.matrix.row(r), b.matrix.row(r));
            for (c, slot) in buf.iter_mut().enumerate() {
                let (w, s) = (c / 64, c % 64);
                *slot = (((ra[w] >> s) & 1) + ((rb[w] >> s) & 1)) as i64;
            }
        });
        Ok(Ciphertext {
            matrix,
            level: a.level.max(b.level),
            noise_ceiling: a.noise_ceiling + b.noise_ceiling,
        })
    }

    /// `Flatten(Flatten(k * I) * C)`: plaintext scaled by `k` in `Z_q`.
    pub fn hom_const_mult(&self, a: &Ciphertext, k: &Residue) -> Result<Ciphertext, FheError> {
        self.check(a)?;
        let q = self.params.q();
        let ell = self.params.ell();
        let mut scaled = BitMatrix::zeros(self.params.n_ct(), self.params.n_ct());
        let mut x = k.clone();
        let mut k_pow = Vec::with_capacity(ell);
        for _ in 0..ell {
            k_pow.push(x.clone());
            x = q.add(&x, &x);
        }
        for r in 0..self.params.n_ct() {
            write_bits(scaled.row_mut(r), (r / ell) * ell, &k_pow[r % ell], ell);
        }
        let at = a.matrix.transpose();
        let mut prod = vec![0u32; self.params.n_ct()];
        let matrix = self.flatten_rows(|r, buf| {
            scaled.product_row(r, &at, &mut prod);
            for (slot, &p) in buf.iter_mut().zip(&prod) {
                *slot = p as i64;
            }
        });
        Ok(Ciphertext {
            matrix,
            level: a.level,
            noise_ceiling: self.params.n_ct() as f64 * a.noise_ceiling,
        })
    }

    /// `Flatten(C1 * C2)`: plaintexts multiply in `Z_q`. Noise grows with the
    /// magnitude of the right operand's plaintext, so keep it small.
    pub fn hom_mult(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, FheError> {
        self.check(a)?;
        self.check(b)?;
        let level = a.level.max(b.level) + 1;
        let ceiling = a.noise_ceiling + self.params.n_ct() as f64 * b.noise_ceiling;
        self.guard(level)?;
        let bt = b.matrix.transpose();
        let mut prod = vec![0u32; self.params.n_ct()];
        let matrix = self.flatten_rows(|r, buf| {
            a.matrix.product_row(r, &bt, &mut prod);
            for (slot, &p) in buf.iter_mut().zip(&prod) {
                *slot = p as i64;
            }
        });
        Ok(Ciphertext {
            matrix,
            level,
            noise_ceiling: ceiling,
        })
    }
}

fn write_bits(row: &mut [u64], offset: usize, value: &Residue, ell: usize) {
    for k in 0..ell {
        let c = offset + k;
        let mask = 1u64 << (c % 64);
        if value.bit(k as u32) {
            row[c / 64] |= mask;
        } else {
            row[c / 64] &= !mask;
        }
    }
}
