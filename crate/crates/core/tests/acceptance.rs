//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use fhe_fft::arith::{self, FixedFormat, FixedWord};
use fhe_fft::engine::{Bit, BitEngine, ClearEngine, FheEngine};
use fhe_fft::fft::Dims;
use fhe_fft::fhe::{self, DepthPolicy, Evaluator, SchemeParams};
use fhe_fft::gates;
use fhe_fft::harness;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

const MEANS_1D: [(usize, f64); 5] = [
    (8, 1.294e-5),
    (16, 2.216e-5),
    (32, 4.199e-5),
    (64, 8.383e-5),
    (128, 1.81e-4),
];

fn fmt(total: u32, frac: u32) -> FixedFormat {
    FixedFormat::new(total, frac).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fhe_round_trips() -> Outcome {
    let start = Instant::now();
    let params = SchemeParams::toy();
    let keys = fhe::keygen(&params, 1).map_err(|e| e.to_string())?;
    let ev = Evaluator::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut trips = 0;
    for _ in 0..1000 {
        let b = rng.gen::<bool>();
        let ct = keys.public.encrypt_bit(b, &mut rng);
        trips += (keys.secret.decrypt_bit(&ct) == Ok(b)) as usize;
    }
    let mut nands = 0;
    for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
        for _ in 0..250 {
            let ca = keys.public.encrypt_bit(a, &mut rng);
            let cb = keys.public.encrypt_bit(b, &mut rng);
            let got = ev.hom_nand(&ca, &cb).and_then(|c| keys.secret.decrypt_bit(&c));
            nands += (got == Ok(!(a && b))) as usize;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        trips == 1000 && nands == 1000 && secs < 60.0,
        format!("{trips}/1000 round trips, {nands}/1000 NAND rows, {secs:.1} s"),
    )
}

type Gate2 = fn(&dyn BitEngine, &Bit, &Bit) -> Result<Bit, fhe_fft::engine::EngineError>;

type GateRow = (&'static str, Gate2, fn(bool, bool) -> bool, u64);

fn gate_table() -> [GateRow; 6] {
    [
        ("NOT", |e, a, _| gates::not(e, a), |a, _| !a, 1),
        ("AND", |e, a, b| gates::and(e, a, b), |a, b| a & b, 2),
        ("OR", |e, a, b| gates::or(e, a, b), |a, b| a | b, 3),
        ("XOR", |e, a, b| gates::xor(e, a, b), |a, b| a ^ b, 4),
        ("NOR", |e, a, b| gates::nor(e, a, b), |a, b| !(a | b), 4),
        ("XNOR", |e, a, b| gates::xnor(e, a, b), |a, b| !(a ^ b), 5),
    ]
}

fn gate_layer() -> Outcome {
    let clear = ClearEngine::new();
    let params = SchemeParams::toy().with_policy(DepthPolicy::Measured);
    let fhe = FheEngine::generate(&params, 3).map_err(|e| e.to_string())?;
    let engines: [&dyn BitEngine; 2] = [&clear, &fhe];
    let mut failures = Vec::new();
    let mut rows = 0;
    for e in engines {
        for (name, gate, oracle, cost) in gate_table() {
            for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
                let (wa, wb) = (e.input(a).unwrap(), e.input(b).unwrap());
                e.counter().reset();
                let out = gate(e, &wa, &wb).and_then(|w| e.read_back(&w));
                let nands = e.stats().nand_count;
                rows += 1;
                if out != Ok(oracle(a, b)) || nands != cost {
                    failures.push(format!("{} {name}({a},{b}) = {out:?} in {nands} NANDs", e.name()));
                }
            }
        }
    }
    check(
        failures.is_empty(),
        format!("{rows} gate rows on clear and fhe, costs NOT 1 AND 2 OR 3 XOR 4 NOR 4 XNOR 5; mismatches {failures:?}"),
    )
}

type IntOp = fn(&dyn BitEngine, &FixedWord, &FixedWord) -> Result<FixedWord, arith::ArithError>;

fn eval_int(e: &dyn BitEngine, op: IntOp, a: i64, b: i64, f: FixedFormat) -> i64 {
    let x = FixedWord::input_int(e, a, f).unwrap();
    let y = FixedWord::input_int(e, b, f).unwrap();
    op(e, &x, &y).unwrap().read_int(e).unwrap()
}

fn exhaustive(op: IntOp, oracle: fn(i64, i64) -> i128, f: FixedFormat) -> usize {
    let clear = ClearEngine::new();
    (f.min_int()..=f.max_int())
        .into_par_iter()
        .map(|a| {
            (f.min_int()..=f.max_int())
                .filter(|&b| eval_int(&clear, op, a, b, f) != f.wrap_int(oracle(a, b)))
                .count()
        })
        .sum()
}

fn nand_cost(op: IntOp, f: FixedFormat) -> u64 {
    let clear = ClearEngine::new();
    let x = FixedWord::input_int(&clear, f.max_int() / 3, f).unwrap();
    let y = FixedWord::input_int(&clear, f.min_int() / 5, f).unwrap();
    clear.counter().reset();
    op(&clear, &x, &y).unwrap();
    clear.stats().nand_count
}

fn arithmetic() -> Outcome {
    let add: IntOp = |e, x, y| arith::add(e, x, y);
    let sub: IntOp = |e, x, y| arith::sub(e, x, y);
    let mul: IntOp = |e, x, y| arith::mul_integer(e, x, y);
    let mul_fixed: IntOp = |e, x, y| arith::mul_fixed(e, x, y);

    let bad_add = exhaustive(add, |a, b| (a + b) as i128, fmt(8, 1));
    let bad_sub = exhaustive(sub, |a, b| (a - b) as i128, fmt(8, 1));
    let bad_mul = exhaustive(mul, |a, b| (a * b) as i128, fmt(6, 1));

    let fhe = FheEngine::generate(&common::arith_params(), 4).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (f8, f4) = (fmt(8, 1), fmt(4, 1));
    let mut fhe_add_ok = 0;
    for _ in 0..50 {
        let (a, b) = (rng.gen_range(-128..128), rng.gen_range(-128..128));
        fhe_add_ok += (eval_int(&fhe, add, a, b, f8) == f8.wrap_int((a + b) as i128)) as usize;
    }
    let mut fhe_mul_ok = 0;
    for _ in 0..20 {
        let (a, b) = (rng.gen_range(-8..8), rng.gen_range(-8..8));
        fhe_mul_ok += (eval_int(&fhe, mul, a, b, f4) == f4.wrap_int((a * b) as i128)) as usize;
    }

    let mut cost_ok = true;
    let mut costs = Vec::new();
    for bits in [4u32, 8, 16, 32] {
        let f = fmt(bits, bits / 2);
        let fl = bits as u64;
        let (a, m, mf) = (nand_cost(add, f), nand_cost(mul, f), nand_cost(mul_fixed, f));
        let mul_cap = 288 * fl * fl * fl.ilog2() as u64;
        cost_ok &= a <= 36 * fl && m <= mul_cap && mf <= mul_cap;
        costs.push(format!("F={bits}: add {a}, mul {m}, mul_fixed {mf}"));
    }
    check(
        bad_add + bad_sub + bad_mul == 0 && fhe_add_ok == 50 && fhe_mul_ok == 20 && cost_ok,
        format!(
            "clear mismatches add {bad_add} sub {bad_sub} mul {bad_mul}; fhe adds {fhe_add_ok}/50, muls {fhe_mul_ok}/20; NANDs {}",
            costs.join("; ")
        ),
    )
}

fn fixed_multiply() -> Outcome {
    let clear = ClearEngine::new();
    let f = fmt(32, 16);
    let tol = 3.0 * 2f64.powi(-16);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0f64;
    for _ in 0..1000 {
        let (x, y) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
        let a = FixedWord::input(&clear, x, f).unwrap();
        let b = FixedWord::input(&clear, y, f).unwrap();
        let got = arith::mul_fixed(&clear, &a, &b).unwrap().read(&clear).unwrap();
        worst = worst.max((got - x * y).abs());
    }
    check(worst <= tol, format!("1000 pairs, worst error {worst:.3e} (limit {tol:.3e})"))
}

fn one_d_reproduction() -> Outcome {
    let clear = ClearEngine::new();
    let mut ok = true;
    let mut rows = Vec::new();
    for (m, reference) in MEANS_1D {
        let r = harness::run_1d_experiment(m, fmt(32, 16), 30, 1, &clear).map_err(|e| e.to_string())?;
        let ratio = r.mean_error / reference;
        ok &= (1.0 / 3.0..=3.0).contains(&ratio) && r.within_bound();
        rows.push(format!(
            "M={m} mean {:.3e} ({ratio:.2}x ref), max {:.3e} <= {:.3e}",
            r.mean_error, r.max_error, r.error_bound
        ));
    }
    check(ok, format!("30 trials each: {}", rows.join("; ")))
}

fn two_d_reproduction() -> Outcome {
    let clear = ClearEngine::new();
    let images = harness::random_images(10, 16, 16, 1);
    let r = harness::run_2d_experiment(&images, fmt(32, 16), &clear).map_err(|e| e.to_string())?;
    check(
        r.mean_error <= 1.2e-4 && r.within_bound(),
        format!(
            "10 images 16x16: mean {:.3e}, variance {:.3e}, max {:.3e} <= 2D bound {:.3e}",
            r.mean_error, r.variance, r.max_error, r.error_bound
        ),
    )
}

fn bound_soundness() -> Outcome {
    let clear = ClearEngine::new();
    let runs = 120;
    let violations: Vec<String> = (0..runs)
        .into_par_iter()
        .filter_map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + run);
            let m = 1usize << rng.gen_range(1..=7);
            let f = fmt(32, rng.gen_range(12..=20));
            let lo = if rng.gen::<bool>() { -1.0 } else { 0.0 };
            let x: Vec<Complex64> = (0..m)
                .map(|_| Complex64::new(rng.gen_range(lo..1.0), rng.gen_range(lo..1.0)))
                .collect();
            let y = harness::circuit_fft_1d(&clear, &x, f).unwrap();
            let r = harness::verify_spectrum(&x, &y, Dims::OneD(m), f).unwrap();
            (!r.within_bound()).then(|| format!("run {run}: M={m} f={}", f.frac_bits()))
        })
        .collect();
    check(
        violations.is_empty(),
        format!("{runs} runs, M in 2..128, f in 12..20, {} violations {violations:?}", violations.len()),
    )
}

fn backend_equivalence() -> Outcome {
    let start = Instant::now();
    let f = fmt(16, 8);
    let x = harness::random_signal(4, &mut ChaCha8Rng::seed_from_u64(8));
    let clear = ClearEngine::new();
    let want = harness::circuit_fft_1d(&clear, &x, f).map_err(|e| e.to_string())?;
    let fhe = FheEngine::generate(&common::fft_params(), 9).map_err(|e| e.to_string())?;
    let got = harness::circuit_fft_1d(&fhe, &x, f).map_err(|e| e.to_string())?;
    let s = fhe.stats();
    check(
        got == want,
        format!(
            "M=4 F=16 f=8 at N={}: {} NANDs, depth {}, {:.1} s, identical {}",
            fhe.params().n_ct(),
            s.nand_count,
            s.max_depth,
            start.elapsed().as_secs_f64(),
            got == want
        ),
    )
}

fn monotonicity() -> Outcome {
    let clear = ClearEngine::new();
    let seeds: Vec<u64> = (0..12).collect();
    let sizes = [8usize, 16, 32, 64, 128];
    let means: Vec<Vec<f64>> = seeds
        .iter()
        .map(|&s| {
            sizes
                .iter()
                .map(|&m| harness::run_1d_experiment(m, fmt(32, 16), 2, s, &clear).unwrap().mean_error)
                .collect()
        })
        .collect();
    let mut votes = Vec::new();
    let mut majority = true;
    for k in 1..sizes.len() {
        let up = means.iter().filter(|row| row[k] >= row[k - 1]).count();
        majority &= 2 * up > seeds.len();
        votes.push(format!("{}->{}: {up}/{}", sizes[k - 1], sizes[k], seeds.len()));
    }
    let mut strict = 0;
    let mut pairs = 0;
    for &s in &seeds[..4] {
        for &m in &sizes {
            let lo = harness::run_1d_experiment(m, fmt(32, 16), 2, s, &clear).unwrap().mean_error;
            let hi = harness::run_1d_experiment(m, fmt(40, 24), 2, s, &clear).unwrap().mean_error;
            strict += (hi < lo) as usize;
            pairs += 1;
        }
    }
    check(
        majority && strict == pairs,
        format!(
            "increasing M votes [{}]; f=24 below f=16 in {strict}/{pairs} matched runs",
            votes.join(", ")
        ),
    )
}

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("FHE correctness at toy parameters", fhe_round_trips),
        ("gate layer on both backends", gate_layer),
        ("adders and multipliers", arithmetic),
        ("fixed-point multiply accuracy", fixed_multiply),
        ("1D accuracy against reference means", one_d_reproduction),
        ("2D accuracy on 16x16 images", two_d_reproduction),
        ("error bound soundness", bound_soundness),
        ("encrypted 4-point FFT equals clear", backend_equivalence),
        ("error monotonicity", monotonicity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{}] {name}: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
