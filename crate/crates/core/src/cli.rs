//! Command-line front end.
//!
//! The client runs `keygen`, `encrypt`, `decrypt` and `verify`; the server runs
//! `fft`, which reads only ciphertexts and the parameters embedded in them.
//!
//! Exit codes: 0 success, 1 other failure, 2 malformed input, 3 noise
//! overflow, 4 error bound violated.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use thiserror::Error;

use crate::arith::{self, ArithError, FixedFormat};
use crate::engine::{Bit, BitEngine, ClearEngine, EngineConfig, EngineError, EngineRegistry, FheEngine};
use crate::error_model;
use crate::fft::{self, ComplexFixed, Dims, FftError, SignalBuffer, TwiddleTable};
use crate::fhe::{FheError, SchemeParams};
use crate::formats::{self, CipherFile, CipherPayload, FormatError, KeyFile, StoredBit};
use crate::harness::{self, HarnessError, Image};

#[derive(Debug, Parser)]
#[command(name = "fhe-fft", version, about = "Fixed-point FFT over homomorphically encrypted bits")]
pub struct Cli {
    /// Bit engine: clear or fhe.
    #[arg(long, global = true, default_value = "clear")]
    pub backend: String,
    /// Fixed-point word width F.
    #[arg(long, global = true, default_value_t = 32)]
    pub bits: u32,
    /// Fractional bits f.
    #[arg(long, global = true, default_value_t = 16)]
    pub frac: u32,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Scheme parameter JSON file (defaults to the toy parameters).
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key pair as <out>.pk and <out>.sk.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode and encrypt a signal (text) or image (.pgm).
    Encrypt {
        #[arg(long)]
        input: PathBuf,
        /// Public key; required for the fhe backend.
        #[arg(long)]
        pk: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the FFT on an encrypted signal. Needs no secret key.
    Fft {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt and decode a ciphertext file to text.
    Decrypt {
        #[arg(long)]
        input: PathBuf,
        /// Secret key; required for encrypted files.
        #[arg(long)]
        sk: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a decrypted spectrum with a double-precision FFT of the signal.
    Verify {
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        spectrum: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print the error bound and cost model as JSON.
    Bound {
        #[arg(long)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        x_bound: f64,
        /// Override the summed twiddle magnitude.
        #[arg(long)]
        w_sum: Option<f64>,
    },
    /// Run random-signal accuracy experiments.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Also run this many random 16x16 images.
        #[arg(long)]
        images: Option<usize>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    NoiseOverflow(String),
    #[error("{0}")]
    BoundViolation(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Parse(_) => 2,
            CliError::NoiseOverflow(_) => 3,
            CliError::BoundViolation(_) => 4,
        }
    }
}

impl From<FheError> for CliError {
    fn from(e: FheError) -> Self {
        match e {
            FheError::NoiseOverflow(msg) => CliError::NoiseOverflow(format!(
                "noise overflow: {msg}. Check that the secret key belongs to the key pair \
                 used for encryption, or use parameters with a larger modulus."
            )),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Fhe(f) => f.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ArithError> for CliError {
    fn from(e: ArithError) -> Self {
        match e {
            ArithError::Engine(e) => e.into(),
            ArithError::Range { .. } | ArithError::InvalidFormat(_) => CliError::Parse(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<FftError> for CliError {
    fn from(e: FftError) -> Self {
        match e {
            FftError::Arith(a) => a.into(),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Fft(f) => f.into(),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Fhe(f @ FheError::NoiseOverflow(_)) => f.into(),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<error_model::ModelError> for CliError {
    fn from(e: error_model::ModelError) -> Self {
        CliError::Parse(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn in_file<T, E: Into<CliError>>(path: &Path, r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| match e.into() {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

impl Cli {
    fn format(&self) -> Result<FixedFormat> {
        Ok(FixedFormat::new(self.bits, self.frac)?)
    }

    fn scheme_params(&self) -> Result<SchemeParams> {
        match &self.params {
            Some(path) => in_file(path, formats::parse_params(&read_text(path)?)),
            None => Ok(SchemeParams::toy()),
        }
    }
}

/// Reads a text signal, or a PGM image as a real 2D signal.
pub fn load_signal(path: &Path) -> Result<formats::SignalFile> {
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let img: Image = in_file(path, formats::parse_pgm(&read_bytes(path)?))?;
        Ok(formats::SignalFile {
            points: img.as_complex(),
            dims: Dims::TwoD {
                rows: img.rows,
                cols: img.cols,
            },
        })
    } else {
        in_file(path, formats::parse_signal(&read_text(path)?))
    }
}

fn export_signal(engine: &dyn BitEngine, s: &SignalBuffer, params: Option<&SchemeParams>) -> Result<CipherFile> {
    let bits: Vec<&Bit> = s
        .points()
        .iter()
        .flat_map(|p| p.re.bits().iter().chain(p.im.bits()))
        .collect();
    let payload = match params {
        None => CipherPayload::Clear(
            bits.iter()
                .map(|b| engine.read_back(b))
                .collect::<std::result::Result<_, _>>()?,
        ),
        Some(params) => CipherPayload::Fhe {
            params: params.clone(),
            bits: bits
                .iter()
                .map(|b| match b.as_const() {
                    Some(v) => Ok(StoredBit::Const(v)),
                    None => Ok(StoredBit::Cipher(engine.export(b)?)),
                })
                .collect::<std::result::Result<_, EngineError>>()?,
        },
    };
    Ok(CipherFile {
        format: s.format(),
        dims: s.dims(),
        payload,
    })
}

fn import_signal(engine: &dyn BitEngine, file: &CipherFile) -> Result<SignalBuffer> {
    let bits: Vec<Bit> = match &file.payload {
        CipherPayload::Clear(bits) => bits
            .iter()
            .map(|&b| engine.input(b))
            .collect::<std::result::Result<_, _>>()?,
        CipherPayload::Fhe { bits, .. } => bits
            .iter()
            .map(|b| match b {
                StoredBit::Const(v) => Ok(Bit::constant(*v)),
                StoredBit::Cipher(ct) => engine.import(ct.clone()),
            })
            .collect::<std::result::Result<_, _>>()?,
    };
    let w = file.format.width();
    let points = bits
        .chunks(2 * w)
        .map(|c| {
            Ok(ComplexFixed::new(
                arith::FixedWord::from_bits(c[..w].to_vec(), file.format)?,
                arith::FixedWord::from_bits(c[w..].to_vec(), file.format)?,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SignalBuffer::new(points, file.dims)?)
}

fn decode_points(bits: &[bool], format: FixedFormat) -> Result<Vec<Complex64>> {
    let w = format.width();
    bits.chunks(2 * w)
        .map(|c| {
            Ok(Complex64::new(
                arith::decode(&c[..w], format)?,
                arith::decode(&c[w..], format)?,
            ))
        })
        .collect()
}

pub fn cmd_keygen(cli: &Cli, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let params = cli.scheme_params()?;
    let keys = crate::fhe::keygen(&params, cli.seed)?;
    let (pk, sk) = (with_suffix(out, ".pk"), with_suffix(out, ".sk"));
    write_file(&pk, &formats::write_public_key(&keys.public))?;
    write_file(&sk, &formats::write_secret_key(&keys.secret))?;
    let _ = writeln!(
        stdout,
        "wrote {} and {} (N = {}, depth budget {}, policy {:?})",
        pk.display(),
        sk.display(),
        params.n_ct(),
        params.depth_budget,
        params.depth_policy
    );
    Ok(())
}

pub fn cmd_encrypt(cli: &Cli, input: &Path, pk: Option<&Path>, out: &Path) -> Result<()> {
    let format = cli.format()?;
    let signal = load_signal(input)?;
    if let Some(w) = fft::headroom_warning(signal.points.len(), max_component(&signal.points), format) {
        eprintln!("warning: {w}");
    }
    let file = match cli.backend.as_str() {
        "clear" => {
            let e = ClearEngine::new();
            let s = SignalBuffer::input(&e, &signal.points, signal.dims, format)?;
            export_signal(&e, &s, None)?
        }
        "fhe" => {
            let path = pk.ok_or_else(|| CliError::Parse("the fhe backend needs --pk".into()))?;
            let key = match in_file(path, formats::read_key(&read_bytes(path)?))? {
                KeyFile::Public(k) => k,
                KeyFile::Secret(_) => return Err(CliError::Parse(format!("{}: expected a public key", path.display()))),
            };
            let params = key.params().clone();
            let e = FheEngine::with_keys(key, None, cli.seed);
            let s = SignalBuffer::input(&e, &signal.points, signal.dims, format)?;
            export_signal(&e, &s, Some(&params))?
        }
        other => return Err(EngineError::UnknownBackend(other.to_string()).into()),
    };
    write_file(out, &formats::write_cipher_file(&file))
}

fn max_component(points: &[Complex64]) -> f64 {
    points
        .iter()
        .map(|z| z.re.abs().max(z.im.abs()))
        .fold(0.0, f64::max)
}

pub fn cmd_fft(input: &Path, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let file = in_file(input, formats::read_cipher_file(&read_bytes(input)?))?;
    let (engine, params): (Box<dyn BitEngine>, Option<SchemeParams>) = match &file.payload {
        CipherPayload::Clear(_) => (Box::new(ClearEngine::new()), None),
        CipherPayload::Fhe { params, .. } => (Box::new(FheEngine::evaluator_only(params.clone())), Some(params.clone())),
    };
    let s = import_signal(engine.as_ref(), &file)?;
    let (result, trace) = match s.dims() {
        Dims::OneD(m) => {
            let (r, t) = fft::fft_1d_traced(engine.as_ref(), &s, &TwiddleTable::new(m, s.format())?)?;
            (r, Some(t))
        }
        Dims::TwoD { .. } => (fft::fft_2d(engine.as_ref(), &s)?, None),
    };
    write_file(out, &formats::write_cipher_file(&export_signal(engine.as_ref(), &result, params.as_ref())?))?;
    let stats = engine.stats();
    let summary = serde_json::json!({
        "backend": engine.name(),
        "points": s.len(),
        "nand_count": stats.nand_count,
        "max_depth": stats.max_depth,
        "butterflies": trace.map(|t| t.butterflies),
    });
    let _ = writeln!(stdout, "{summary}");
    Ok(())
}

pub fn cmd_decrypt(input: &Path, sk: Option<&Path>, out: &Path) -> Result<()> {
    let file = in_file(input, formats::read_cipher_file(&read_bytes(input)?))?;
    let bits = match &file.payload {
        CipherPayload::Clear(bits) => bits.clone(),
        CipherPayload::Fhe { params, bits } => {
            let path = sk.ok_or_else(|| CliError::Parse("encrypted input needs --sk".into()))?;
            let key = match in_file(path, formats::read_key(&read_bytes(path)?))? {
                KeyFile::Secret(k) => k,
                KeyFile::Public(_) => return Err(CliError::Parse(format!("{}: expected a secret key", path.display()))),
            };
            if key.params() != params {
                return Err(CliError::Other(format!(
                    "{} was made for different scheme parameters than {}",
                    path.display(),
                    input.display()
                )));
            }
            bits.iter()
                .map(|b| match b {
                    StoredBit::Const(v) => Ok(*v),
                    StoredBit::Cipher(ct) => key.decrypt_bit(ct),
                })
                .collect::<std::result::Result<_, FheError>>()?
        }
    };
    let points = decode_points(&bits, file.format)?;
    write_file(out, formats::write_signal(&points, file.dims).as_bytes())
}

pub fn cmd_verify(cli: &Cli, signal: &Path, spectrum: &Path, json: bool, stdout: &mut dyn Write) -> Result<harness::ErrorReport> {
    let plain = load_signal(signal)?;
    let spec = in_file(spectrum, formats::parse_signal(&read_text(spectrum)?))?;
    let report = harness::verify_spectrum(&plain.points, &spec.points, plain.dims, cli.format()?)?;
    let _ = if json {
        writeln!(stdout, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))
    } else {
        write!(stdout, "{}", harness::format_table(std::slice::from_ref(&report)))
    };
    if !report.within_bound() {
        return Err(CliError::BoundViolation(format!(
            "max error {:.4e} exceeds the bound {:.4e}",
            report.max_error, report.error_bound
        )));
    }
    Ok(report)
}

pub fn cmd_bound(cli: &Cli, points: usize, x_bound: f64, w_sum: Option<f64>, stdout: &mut dyn Write) -> Result<()> {
    let params = cli.scheme_params()?;
    let summary = error_model::summarize(cli.format()?, x_bound, points, w_sum, params.n_ct() as u64)?;
    let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

pub fn cmd_bench(cli: &Cli, sizes: &[usize], trials: usize, images: Option<usize>, json: bool, stdout: &mut dyn Write) -> Result<()> {
    let format = cli.format()?;
    let config = EngineConfig {
        params: cli.scheme_params()?,
        seed: cli.seed,
    };
    let engine = EngineRegistry::default().build(&cli.backend, &config)?;
    let mut reports = Vec::new();
    for &m in sizes {
        engine.reset_stats();
        reports.push(harness::run_1d_experiment(m, format, trials, cli.seed, engine.as_ref())?);
    }
    if let Some(count) = images {
        engine.reset_stats();
        let imgs = harness::random_images(count, 16, 16, cli.seed);
        reports.push(harness::run_2d_experiment(&imgs, format, engine.as_ref())?);
    }
    let _ = if json {
        writeln!(stdout, "{}", serde_json::to_string_pretty(&reports).expect("reports serialize"))
    } else {
        write!(stdout, "{}", harness::format_table(&reports))
    };
    Ok(())
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    if let Some(n) = cli.threads {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if !EngineRegistry::default().contains(&cli.backend) {
        return Err(CliError::Parse(format!(
            "unknown backend '{}' (available: {})",
            cli.backend,
            EngineRegistry::default().names().collect::<Vec<_>>().join(", ")
        )));
    }
    match &cli.command {
        Command::Keygen { out } => cmd_keygen(cli, out, stdout),
        Command::Encrypt { input, pk, out } => cmd_encrypt(cli, input, pk.as_deref(), out),
        Command::Fft { input, out } => cmd_fft(input, out, stdout),
        Command::Decrypt { input, sk, out } => cmd_decrypt(input, sk.as_deref(), out),
        Command::Verify { signal, spectrum, json } => cmd_verify(cli, signal, spectrum, *json, stdout).map(|_| ()),
        Command::Bound { points, x_bound, w_sum } => cmd_bound(cli, *points, *x_bound, *w_sum, stdout),
        Command::Bench { sizes, trials, images, json } => cmd_bench(cli, sizes, *trials, *images, *json, stdout),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
