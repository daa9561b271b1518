//! Bit engines: the backends every circuit in this crate is expressed against.
//!
//! A [`BitEngine`] evaluates NAND on opaque [`Bit`] handles. Two backends ship
//! with the crate and are registered by name in [`EngineRegistry`]:
//!
//! * `clear`: exact cleartext bits. Circuit semantics are identical to the
//!   encrypted backend below its noise budget, so it is used for full-size
//!   experiments.
//! * `fhe`: every wire is a GSW ciphertext and NAND is evaluated
//!   homomorphically.
//!
//! Constants are plaintext-tagged handles. A NAND with a constant operand is
//! folded (`NAND(x, 0) = 1`, `NAND(x, 1) = NOT x`) and is not counted. Folding
//! means the evaluator learns where public constants enter the circuit; with a
//! constant multiplier this reveals which partial-product rows are zero, and so
//! some bits of the result that must be zero.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fhe::{keygen, Ciphertext, Evaluator, FheError, PublicKey, SchemeParams, SecretKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("bit belongs to engine #{found}, not engine #{expected}")]
    ForeignBit { expected: u32, found: u32 },
    #[error("operation not supported by the {backend} backend: {what}")]
    Capability { backend: &'static str, what: String },
    #[error("unknown backend '{0}'")]
    UnknownBackend(String),
    #[error(transparent)]
    Fhe(#[from] FheError),
}

static NEXT_ENGINE_ID: AtomicU32 = AtomicU32::new(1);

fn next_engine_id() -> u32 {
    NEXT_ENGINE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Handle to one bit flowing through a circuit.
#[derive(Clone)]
pub struct Bit(Repr);

#[derive(Clone)]
enum Repr {
    Const(bool),
    Wire { engine: u32, depth: u32, value: Value },
}

#[derive(Clone)]
enum Value {
    Clear(bool),
    Cipher(Arc<Ciphertext>),
}

impl Bit {
    pub const ZERO: Bit = Bit(Repr::Const(false));
    pub const ONE: Bit = Bit(Repr::Const(true));

    pub fn constant(v: bool) -> Self {
        Bit(Repr::Const(v))
    }

    pub fn as_const(&self) -> Option<bool> {
        match self.0 {
            Repr::Const(v) => Some(v),
            Repr::Wire { .. } => None,
        }
    }

    pub fn is_const(&self) -> bool {
        self.as_const().is_some()
    }

    /// NAND depth of the wire; constants have depth 0.
    pub fn depth(&self) -> u32 {
        match self.0 {
            Repr::Const(_) => 0,
            Repr::Wire { depth, .. } => depth,
        }
    }

    fn engine(&self) -> Option<u32> {
        match self.0 {
            Repr::Const(_) => None,
            Repr::Wire { engine, .. } => Some(engine),
        }
    }

    fn same_wire(&self, other: &Bit) -> bool {
        match (&self.0, &other.0) {
            (
                Repr::Wire {
                    value: Value::Cipher(a),
                    ..
                },
                Repr::Wire {
                    value: Value::Cipher(b),
                    ..
                },
            ) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl fmt::Debug for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Const(v) => write!(f, "Const({})", *v as u8),
            Repr::Wire { engine, depth, .. } => write!(f, "Wire(engine={engine}, depth={depth})"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateStats {
    pub nand_count: u64,
    pub max_depth: u32,
}

/// Atomic NAND counter shared by all backends.
#[derive(Debug, Default)]
pub struct GateCounter {
    nands: AtomicU64,
    depth: AtomicU32,
}

impl GateCounter {
    fn record(&self, depth: u32) {
        self.nands.fetch_add(1, Ordering::Relaxed);
        self.depth.fetch_max(depth, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> GateStats {
        GateStats {
            nand_count: self.nands.load(Ordering::Relaxed),
            max_depth: self.depth.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.nands.store(0, Ordering::Relaxed);
        self.depth.store(0, Ordering::Relaxed);
    }
}

/// A NAND-evaluating backend.
///
/// Implementors provide the raw wire operations; callers use [`BitEngine::nand`]
/// and [`BitEngine::negate`], which check ownership, fold constants and count.
pub trait BitEngine: Send + Sync {
    fn name(&self) -> &'static str;

    /// Instance id stamped on every wire this engine creates.
    fn id(&self) -> u32;

    fn counter(&self) -> &GateCounter;

    /// Brings a private input bit into the engine (encrypts it on `fhe`).
    fn input(&self, bit: bool) -> Result<Bit, EngineError>;

    /// Reveals a bit. Requires the secret key on `fhe`.
    fn read_back(&self, bit: &Bit) -> Result<bool, EngineError>;

    /// NAND of two wires owned by this engine. Not counted; use `nand`.
    fn nand_wires(&self, a: &Bit, b: &Bit, depth: u32) -> Result<Bit, EngineError>;

    /// Negation of a wire owned by this engine, without a NAND.
    fn negate_wire(&self, a: &Bit) -> Result<Bit, EngineError>;

    fn export(&self, _bit: &Bit) -> Result<Ciphertext, EngineError> {
        Err(EngineError::Capability {
            backend: self.name(),
            what: "ciphertext export".into(),
        })
    }

    fn import(&self, _ct: Ciphertext) -> Result<Bit, EngineError> {
        Err(EngineError::Capability {
            backend: self.name(),
            what: "ciphertext import".into(),
        })
    }

    fn constant(&self, bit: bool) -> Bit {
        Bit::constant(bit)
    }

    fn stats(&self) -> GateStats {
        self.counter().snapshot()
    }

    fn reset_stats(&self) {
        self.counter().reset()
    }

    fn check(&self, bit: &Bit) -> Result<(), EngineError> {
        match bit.engine() {
            Some(found) if found != self.id() => Err(EngineError::ForeignBit {
                expected: self.id(),
                found,
            }),
            _ => Ok(()),
        }
    }

    fn nand(&self, a: &Bit, b: &Bit) -> Result<Bit, EngineError> {
        self.check(a)?;
        self.check(b)?;
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Ok(Bit::constant(!(x && y))),
            (Some(false), None) | (None, Some(false)) => Ok(Bit::ONE),
            (Some(true), None) => self.negate_wire(b),
            (None, Some(true)) => self.negate_wire(a),
            (None, None) => {
                let depth = a.depth().max(b.depth()) + 1;
                let out = self.nand_wires(a, b, depth)?;
                self.counter().record(depth);
                Ok(out)
            }
        }
    }

    /// Free negation. Circuits that model an explicit NOT gate use
    /// `gates::not`, which costs one NAND.
    fn negate(&self, a: &Bit) -> Result<Bit, EngineError> {
        self.check(a)?;
        match a.as_const() {
            Some(v) => Ok(Bit::constant(!v)),
            None => self.negate_wire(a),
        }
    }
}

/// Exact cleartext backend.
#[derive(Debug)]
pub struct ClearEngine {
    id: u32,
    counter: GateCounter,
}

impl ClearEngine {
    pub fn new() -> Self {
        Self {
            id: next_engine_id(),
            counter: GateCounter::default(),
        }
    }

    fn value(&self, bit: &Bit) -> bool {
        match &bit.0 {
            Repr::Const(v) => *v,
            Repr::Wire {
                value: Value::Clear(v),
                ..
            } => *v,
            Repr::Wire { .. } => unreachable!("cleartext engine owns only cleartext wires"),
        }
    }

    fn wire(&self, value: bool, depth: u32) -> Bit {
        Bit(Repr::Wire {
            engine: self.id,
            depth,
            value: Value::Clear(value),
        })
    }
}

impl Default for ClearEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl BitEngine for ClearEngine {
    fn name(&self) -> &'static str {
        "clear"
    }

    fn id(&self) -> u32 {
        self.id
    }

    fn counter(&self) -> &GateCounter {
        &self.counter
    }

    fn input(&self, bit: bool) -> Result<Bit, EngineError> {
        Ok(self.wire(bit, 0))
    }

    fn read_back(&self, bit: &Bit) -> Result<bool, EngineError> {
        self.check(bit)?;
        Ok(self.value(bit))
    }

    #[inline]
    fn nand_wires(&self, a: &Bit, b: &Bit, depth: u32) -> Result<Bit, EngineError> {
        Ok(self.wire(!(self.value(a) && self.value(b)), depth))
    }

    fn negate_wire(&self, a: &Bit) -> Result<Bit, EngineError> {
        Ok(self.wire(!self.value(a), a.depth()))
    }
}

/// Encrypted backend over the GSW scheme.
pub struct FheEngine {
    id: u32,
    counter: GateCounter,
    evaluator: Evaluator,
    public: Option<PublicKey>,
    secret: Option<SecretKey>,
    rng: Mutex<ChaCha20Rng>,
}

impl FheEngine {
    /// Engine holding both keys: encrypts inputs and can read results back.
    pub fn with_keys(public: PublicKey, secret: Option<SecretKey>, seed: u64) -> Self {
        Self {
            id: next_engine_id(),
            counter: GateCounter::default(),
            evaluator: Evaluator::new(public.params().clone()),
            public: Some(public),
            secret,
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
        }
    }

    /// Evaluation-only engine: no key material, operates on imported
    /// ciphertexts.
    pub fn evaluator_only(params: SchemeParams) -> Self {
        Self {
            id: next_engine_id(),
            counter: GateCounter::default(),
            evaluator: Evaluator::new(params),
            public: None,
            secret: None,
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(0)),
        }
    }

    /// Generates a fresh key pair from `seed`.
    pub fn generate(params: &SchemeParams, seed: u64) -> Result<Self, EngineError> {
        let keys = keygen(params, seed)?;
        Ok(Self::with_keys(
            keys.public,
            Some(keys.secret),
            seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
        ))
    }

    pub fn params(&self) -> &SchemeParams {
        self.evaluator.params()
    }

    pub fn secret_key(&self) -> Option<&SecretKey> {
        self.secret.as_ref()
    }

    /// Measured noise of an encrypted wire, for diagnostics.
    pub fn noise_of(&self, bit: &Bit) -> Result<f64, EngineError> {
        let ct = self.cipher(bit)?;
        let sk = self.secret.as_ref().ok_or_else(|| self.no_key("noise readout"))?;
        let (b, _) = sk.decrypt_bit_with_noise(ct)?;
        let q = self.params().q();
        Ok(sk.noise(ct, &if b { q.from_u64(1) } else { q.zero() })?)
    }

    fn no_key(&self, what: &str) -> EngineError {
        EngineError::Capability {
            backend: "fhe",
            what: format!("{what} requires the secret key"),
        }
    }

    fn cipher<'a>(&self, bit: &'a Bit) -> Result<&'a Ciphertext, EngineError> {
        self.check(bit)?;
        match &bit.0 {
            Repr::Wire {
                value: Value::Cipher(ct),
                ..
            } => Ok(ct),
            Repr::Const(_) => Err(EngineError::Capability {
                backend: "fhe",
                what: "constants are plaintext and carry no ciphertext".into(),
            }),
            Repr::Wire { .. } => unreachable!("fhe engine owns only encrypted wires"),
        }
    }

    fn wire(&self, ct: Ciphertext, depth: u32) -> Bit {
        Bit(Repr::Wire {
            engine: self.id,
            depth,
            value: Value::Cipher(Arc::new(ct)),
        })
    }
}

impl BitEngine for FheEngine {
    fn name(&self) -> &'static str {
        "fhe"
    }

    fn id(&self) -> u32 {
        self.id
    }

    fn counter(&self) -> &GateCounter {
        &self.counter
    }

    fn input(&self, bit: bool) -> Result<Bit, EngineError> {
        let pk = self.public.as_ref().ok_or_else(|| EngineError::Capability {
            backend: "fhe",
            what: "encrypting inputs requires the public key".into(),
        })?;
        let mut rng = self.rng.lock().expect("rng lock");
        Ok(self.wire(pk.encrypt_bit(bit, &mut *rng), 0))
    }

    fn read_back(&self, bit: &Bit) -> Result<bool, EngineError> {
        if let Some(v) = bit.as_const() {
            return Ok(v);
        }
        let ct = self.cipher(bit)?;
        let sk = self.secret.as_ref().ok_or_else(|| self.no_key("read_back"))?;
        Ok(sk.decrypt_bit(ct)?)
    }

    fn nand_wires(&self, a: &Bit, b: &Bit, depth: u32) -> Result<Bit, EngineError> {
        let ct = if a.same_wire(b) {
            // NAND(x, x) = NOT x
            self.evaluator.hom_not(self.cipher(a)?)?
        } else {
            self.evaluator.hom_nand(self.cipher(a)?, self.cipher(b)?)?
        };
        Ok(self.wire(ct, depth))
    }

    fn negate_wire(&self, a: &Bit) -> Result<Bit, EngineError> {
        let ct = self.evaluator.hom_not(self.cipher(a)?)?;
        Ok(self.wire(ct, a.depth()))
    }

    fn export(&self, bit: &Bit) -> Result<Ciphertext, EngineError> {
        Ok(self.cipher(bit)?.clone())
    }

    fn import(&self, ct: Ciphertext) -> Result<Bit, EngineError> {
        let n = self.params().n_ct();
        if ct.matrix().rows() != n || ct.matrix().cols() != n {
            return Err(FheError::Mismatch(format!(
                "imported ciphertext side {} does not match parameters ({n})",
                ct.matrix().rows()
            ))
            .into());
        }
        let depth = ct.level();
        Ok(self.wire(ct, depth))
    }
}

/// Inputs available to backend factories.
#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub params: SchemeParams,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            params: SchemeParams::toy(),
            seed: 0,
        }
    }
}

pub type EngineFactory = fn(&EngineConfig) -> Result<Box<dyn BitEngine>, EngineError>;

/// Backends selectable by name at runtime.
#[derive(Clone)]
pub struct EngineRegistry {
    factories: BTreeMap<&'static str, EngineFactory>,
}

impl EngineRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: EngineFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, config: &EngineConfig) -> Result<Box<dyn BitEngine>, EngineError> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| EngineError::UnknownBackend(name.to_string()))?;
        factory(config)
    }
}

impl Default for EngineRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("clear", |_| Ok(Box::new(ClearEngine::new())));
        r.register("fhe", |cfg| {
            Ok(Box::new(FheEngine::generate(&cfg.params, cfg.seed)?))
        });
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nand_truth_table_and_counter() {
        let e = ClearEngine::new();
        for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
            let out = e.nand(&e.input(a).unwrap(), &e.input(b).unwrap()).unwrap();
            assert_eq!(e.read_back(&out).unwrap(), !(a && b));
        }
        assert_eq!(e.stats().nand_count, 4);
        let x = e.input(true).unwrap();
        let mut y = x.clone();
        for _ in 0..10 {
            y = e.nand(&x, &y).unwrap();
        }
        assert_eq!(e.stats().nand_count, 14);
        assert_eq!(e.stats().max_depth, 10);
    }

    #[test]
    fn constant_operands_fold_without_counting() {
        let e = ClearEngine::new();
        let x = e.input(true).unwrap();
        let y = e.nand(&x, &Bit::ONE).unwrap();
        assert!(!y.is_const());
        assert!(!e.read_back(&y).unwrap());
        assert_eq!(e.nand(&x, &Bit::ZERO).unwrap().as_const(), Some(true));
        assert_eq!(e.nand(&Bit::ONE, &Bit::ONE).unwrap().as_const(), Some(false));
        assert_eq!(e.stats().nand_count, 0);
    }

    #[test]
    fn mixing_engines_is_rejected() {
        let a = ClearEngine::new();
        let b = ClearEngine::new();
        let x = a.input(true).unwrap();
        let y = b.input(true).unwrap();
        assert!(matches!(a.nand(&x, &y), Err(EngineError::ForeignBit { .. })));
        assert!(b.read_back(&x).is_err());
    }

    #[test]
    fn registry_builds_by_name() {
        let reg = EngineRegistry::default();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["clear", "fhe"]);
        let e = reg.build("clear", &EngineConfig::default()).unwrap();
        assert_eq!(e.name(), "clear");
        assert!(matches!(
            reg.build("gpu", &EngineConfig::default()),
            Err(EngineError::UnknownBackend(_))
        ));
    }

    #[test]
    fn evaluator_only_engine_cannot_read_back() {
        let params = SchemeParams::toy();
        let full = FheEngine::generate(&params, 3).unwrap();
        let ct = full.export(&full.input(true).unwrap()).unwrap();
        let server = FheEngine::evaluator_only(params);
        let bit = server.import(ct).unwrap();
        let not = server.nand(&bit, &bit).unwrap();
        assert!(matches!(
            server.read_back(&not),
            Err(EngineError::Capability { .. })
        ));
        assert!(!full.read_back(&full.import(server.export(&not).unwrap()).unwrap()).unwrap());
    }
}
