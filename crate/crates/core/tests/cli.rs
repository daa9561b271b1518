use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fhe_fft::arith::FixedFormat;
use fhe_fft::engine::ClearEngine;
use fhe_fft::formats;
use fhe_fft::harness;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhe-fft"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn signal(m: usize, seed: u64) -> Vec<Complex64> {
    harness::random_signal(m, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn read_points(path: &Path) -> Vec<Complex64> {
    formats::parse_signal(&std::fs::read_to_string(path).unwrap())
        .unwrap()
        .points
}

#[test]
fn clear_pipeline_matches_the_in_process_circuit() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let x = signal(8, 3);
    write(d, "x.txt", formats::write_signal(&x, fhe_fft::fft::Dims::OneD(8)).as_bytes());
    ok(d, &["encrypt", "--input", "x.txt", "--out", "x.ct"]);
    let stats = ok(d, &["fft", "--input", "x.ct", "--out", "y.ct"]);
    let stats: serde_json::Value = serde_json::from_str(stats.trim()).unwrap();
    assert_eq!(stats["butterflies"], 12);
    assert!(stats["nand_count"].as_u64().unwrap() > 0);
    ok(d, &["decrypt", "--input", "y.ct", "--out", "y.txt"]);

    let got = read_points(&d.join("y.txt"));
    let want = harness::circuit_fft_1d(&ClearEngine::new(), &x, FixedFormat::new(32, 16).unwrap()).unwrap();
    assert_eq!(got, want);

    let report = ok(d, &["verify", "--signal", "x.txt", "--spectrum", "y.txt", "--json"]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    let mean = report["mean_error"].as_f64().unwrap();
    assert!(mean > 1e-7 && mean < 1e-4, "mean {mean}");
    assert!(report["max_error"].as_f64().unwrap() <= report["error_bound"].as_f64().unwrap());
}

#[test]
fn tampered_spectrum_is_a_bound_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let x = signal(4, 9);
    let mut y = harness::oracle_fft(&x);
    y[2].re += 0.5;
    let dims = fhe_fft::fft::Dims::OneD(4);
    write(d, "x.txt", formats::write_signal(&x, dims).as_bytes());
    write(d, "y.txt", formats::write_signal(&y, dims).as_bytes());
    let out = run(d, &["verify", "--signal", "x.txt", "--spectrum", "y.txt"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn pgm_image_round_trips_through_the_2d_transform() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let img = &harness::random_images(1, 4, 8, 2)[0];
    write(d, "img.pgm", formats::write_pgm(img, 255).as_bytes());
    ok(d, &["encrypt", "--input", "img.pgm", "--out", "img.ct"]);
    let stats = ok(d, &["fft", "--input", "img.ct", "--out", "spec.ct"]);
    let stats: serde_json::Value = serde_json::from_str(stats.trim()).unwrap();
    assert_eq!(stats["points"], 32);
    ok(d, &["decrypt", "--input", "spec.ct", "--out", "spec.txt"]);
    let text = std::fs::read_to_string(d.join("spec.txt")).unwrap();
    let file = formats::parse_signal(&text).unwrap();
    assert_eq!(file.dims, fhe_fft::fft::Dims::TwoD { rows: 4, cols: 8 });
    ok(d, &["verify", "--signal", "img.pgm", "--spectrum", "spec.txt"]);
}

#[test]
fn encrypted_pipeline_and_wrong_key() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "p.json", br#"{"n": 1, "q_bits": 200, "q_offset": 75, "noise_bound": 2}"#);
    let x = [Complex64::new(0.75, -0.5), Complex64::new(0.25, 1.0)];
    write(d, "x.txt", formats::write_signal(&x, fhe_fft::fft::Dims::OneD(2)).as_bytes());
    let common = ["--backend", "fhe", "--bits", "8", "--frac", "4", "--params", "p.json"];
    let with = |rest: &[&'static str]| common.iter().chain(rest).copied().collect::<Vec<&str>>();
    ok(d, &with(&["keygen", "--out", "k"]));
    ok(d, &with(&["--seed", "1", "keygen", "--out", "other"]));
    ok(d, &with(&["encrypt", "--input", "x.txt", "--pk", "k.pk", "--out", "x.ct"]));
    ok(d, &["fft", "--input", "x.ct", "--out", "y.ct"]);
    ok(d, &["decrypt", "--input", "y.ct", "--sk", "k.sk", "--out", "y.txt"]);
    assert_eq!(
        read_points(&d.join("y.txt")),
        [Complex64::new(1.0, 0.5), Complex64::new(0.5, -1.5)]
    );

    let out = run(d, &["decrypt", "--input", "y.ct", "--sk", "other.sk", "--out", "z.txt"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise"));
}

#[test]
fn malformed_input_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "bad.txt", b"0.5,0.5\n# comment\n0.25;0.1\n");
    let out = run(d, &["encrypt", "--input", "bad.txt", "--out", "x.ct"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = run(d, &["--backend", "gpu", "bound", "--points", "8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bound_command_prints_the_error_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["bound", "--points", "8"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let bound = v["bound"].as_f64().unwrap();
    assert!((bound - 3.052e-4).abs() < 1e-6, "bound {bound}");
    assert_eq!(v["trivial"], false);
}
