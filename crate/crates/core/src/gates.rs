//! Logic gates derived from NAND.
//!
//! NAND costs on wire operands: NOT 1, AND 2, OR 3, XOR 4, NOR 4, XNOR 5.
//! When an operand is a plaintext constant the gate folds to a wire, its
//! negation, or a constant, at no NAND cost.

use crate::engine::{Bit, BitEngine, EngineError};

type Result<T> = std::result::Result<T, EngineError>;

/// `NAND(a, a)`.
pub fn not<E: BitEngine + ?Sized>(e: &E, a: &Bit) -> Result<Bit> {
    match a.as_const() {
        Some(v) => Ok(Bit::constant(!v)),
        None => e.nand(a, a),
    }
}

/// `NOT(NAND(a, b))`.
pub fn and<E: BitEngine + ?Sized>(e: &E, a: &Bit, b: &Bit) -> Result<Bit> {
    match (a.as_const(), b.as_const()) {
        (Some(false), _) | (_, Some(false)) => Ok(Bit::ZERO),
        (Some(true), _) => Ok(b.clone()),
        (_, Some(true)) => Ok(a.clone()),
        _ => not(e, &e.nand(a, b)?),
    }
}

/// `NAND(NOT a, NOT b)`.
pub fn or<E: BitEngine + ?Sized>(e: &E, a: &Bit, b: &Bit) -> Result<Bit> {
    match (a.as_const(), b.as_const()) {
        (Some(true), _) | (_, Some(true)) => Ok(Bit::ONE),
        (Some(false), _) => Ok(b.clone()),
        (_, Some(false)) => Ok(a.clone()),
        _ => e.nand(&not(e, a)?, &not(e, b)?),
    }
}

/// Four-NAND XOR: `t = NAND(a, b)`, `NAND(NAND(a, t), NAND(b, t))`.
pub fn xor<E: BitEngine + ?Sized>(e: &E, a: &Bit, b: &Bit) -> Result<Bit> {
    match (a.as_const(), b.as_const()) {
        (Some(x), _) => {
            if x {
                e.negate(b)
            } else {
                Ok(b.clone())
            }
        }
        (_, Some(y)) => {
            if y {
                e.negate(a)
            } else {
                Ok(a.clone())
            }
        }
        _ => {
            let t = e.nand(a, b)?;
            let u = e.nand(a, &t)?;
            let v = e.nand(b, &t)?;
            e.nand(&u, &v)
        }
    }
}

/// `NOT(OR(a, b))`.
pub fn nor<E: BitEngine + ?Sized>(e: &E, a: &Bit, b: &Bit) -> Result<Bit> {
    match (a.as_const(), b.as_const()) {
        (Some(true), _) | (_, Some(true)) => Ok(Bit::ZERO),
        (Some(false), _) => not(e, b),
        (_, Some(false)) => not(e, a),
        _ => not(e, &or(e, a, b)?),
    }
}

/// `NOT(XOR(a, b))`.
pub fn xnor<E: BitEngine + ?Sized>(e: &E, a: &Bit, b: &Bit) -> Result<Bit> {
    match (a.as_const(), b.as_const()) {
        (Some(x), _) => {
            if x {
                Ok(b.clone())
            } else {
                not(e, b)
            }
        }
        (_, Some(y)) => {
            if y {
                Ok(a.clone())
            } else {
                not(e, a)
            }
        }
        _ => not(e, &xor(e, a, b)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ClearEngine;

    type Gate = fn(&ClearEngine, &Bit, &Bit) -> Result<Bit>;

    type Row = (&'static str, Gate, fn(bool, bool) -> bool, u64);

    fn table() -> Vec<Row> {
        vec![
            ("and", and::<ClearEngine>, |a, b| a && b, 2),
            ("or", or::<ClearEngine>, |a, b| a || b, 3),
            ("xor", xor::<ClearEngine>, |a, b| a ^ b, 4),
            ("nor", nor::<ClearEngine>, |a, b| !(a || b), 4),
            ("xnor", xnor::<ClearEngine>, |a, b| !(a ^ b), 5),
        ]
    }

    #[test]
    fn binary_gates_match_truth_tables_and_costs() {
        for (name, gate, oracle, cost) in table() {
            for a in [false, true] {
                for b in [false, true] {
                    let e = ClearEngine::new();
                    let (x, y) = (e.input(a).unwrap(), e.input(b).unwrap());
                    let out = gate(&e, &x, &y).unwrap();
                    assert_eq!(e.read_back(&out).unwrap(), oracle(a, b), "{name}({a},{b})");
                    assert_eq!(e.stats().nand_count, cost, "{name} cost");
                }
            }
        }
    }

    #[test]
    fn not_costs_one() {
        let e = ClearEngine::new();
        let x = e.input(true).unwrap();
        assert!(!e.read_back(&not(&e, &x).unwrap()).unwrap());
        assert_eq!(e.stats().nand_count, 1);
    }

    #[test]
    fn constant_operands_fold_for_every_gate() {
        for (name, gate, oracle, _) in table() {
            for a in [false, true] {
                for c in [false, true] {
                    let e = ClearEngine::new();
                    let x = e.input(a).unwrap();
                    let k = Bit::constant(c);
                    let left = gate(&e, &x, &k).unwrap();
                    let right = gate(&e, &k, &x).unwrap();
                    assert_eq!(e.read_back(&left).unwrap(), oracle(a, c), "{name}");
                    assert_eq!(e.read_back(&right).unwrap(), oracle(c, a), "{name}");
                    let both = gate(&e, &Bit::constant(a), &k).unwrap();
                    assert_eq!(both.as_const(), Some(oracle(a, c)), "{name}");
                    let folded_cost = if matches!(name, "nor" | "xnor") { 2 } else { 0 };
                    assert!(e.stats().nand_count <= folded_cost, "{name} folded cost");
                }
            }
        }
    }

    #[test]
    fn de_morgan_holds_pointwise() {
        for a in [false, true] {
            for b in [false, true] {
                let e = ClearEngine::new();
                let (x, y) = (e.input(a).unwrap(), e.input(b).unwrap());
                let lhs = or(&e, &x, &y).unwrap();
                let nx = not(&e, &x).unwrap();
                let ny = not(&e, &y).unwrap();
                let rhs = not(&e, &and(&e, &nx, &ny).unwrap()).unwrap();
                assert_eq!(e.read_back(&lhs).unwrap(), e.read_back(&rhs).unwrap());
            }
        }
    }
}
