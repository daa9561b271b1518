//! On-disk formats.
//!
//! * Scheme parameters: JSON (see [`ParamsSpec`]).
//! * Signals: text, one `re,im` point per line. `#` starts a comment; a
//!   `# shape RxC` comment marks a row-major 2D signal.
//! * Images: PGM, ASCII (`P2`) or binary (`P5`), scaled to `[0, 1]` by maxval.
//! * Keys and ciphertexts: little-endian binary containers.
//!
//! Key container:
//!
//! ```text
//! magic "FFHEKEY\0" | version u16 | kind u8 (0 public, 1 secret)
//! params_len u32 | params JSON | SHA-256(params JSON) [32]
//! limbs u32 | rows u32 | cols u32 | rows * cols residues of `limbs` u64 each
//! ```
//!
//! Ciphertext container, bits ordered point by point, real before imaginary,
//! LSB first within each word:
//!
//! ```text
//! magic "FFHECTX\0" | version u16 | kind u8 (0 clear, 1 fhe)
//! total_bits u32 | frac_bits u32 | shape u8 (1 or 2) | dim0 u64 | dim1 u64
//! fhe only: params_len u32 | params JSON | SHA-256(params JSON) [32]
//! bit_count u64
//! clear: ceil(bit_count / 8) bytes, LSB first
//! fhe:   per bit a tag u8 (0 const false, 1 const true, 2 ciphertext);
//!        ciphertexts follow their tag as level u32 | noise_ceiling f64 |
//!        N_ct rows of ceil(N_ct / 64) u64 words, row-major
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arith::FixedFormat;
use crate::bitmatrix::BitMatrix;
use crate::fft::Dims;
use crate::fhe::{Ciphertext, DepthPolicy, FheError, PublicKey, SchemeParams, SecretKey};
use crate::harness::Image;
use crate::modq::Residue;

pub const KEY_MAGIC: &[u8; 8] = b"FFHEKEY\0";
pub const CIPHER_MAGIC: &[u8; 8] = b"FFHECTX\0";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("byte offset {offset}: {msg}")]
    Binary { offset: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Fhe(#[from] FheError),
}

type Result<T> = std::result::Result<T, FormatError>;

/// Parameter file contents. Omitted fields take defaults: `m = N`, the
/// largest valid `depth_budget`, and the strict depth policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub n: usize,
    pub q_bits: u32,
    pub q_offset: u64,
    pub noise_bound: u64,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub depth_budget: Option<u32>,
    #[serde(default)]
    pub depth_policy: Option<DepthPolicy>,
}

impl ParamsSpec {
    pub fn build(&self) -> Result<SchemeParams> {
        let mut p = SchemeParams::with_max_budget(self.n, self.q_bits, self.q_offset, self.noise_bound, self.m)?;
        if let Some(d) = self.depth_budget {
            p.depth_budget = d;
            p.validate()?;
        }
        if let Some(policy) = self.depth_policy {
            p.depth_policy = policy;
        }
        Ok(p)
    }
}

pub fn parse_params(text: &str) -> Result<SchemeParams> {
    let spec: ParamsSpec = serde_json::from_str(text).map_err(|e| FormatError::Line {
        line: e.line(),
        msg: e.to_string(),
    })?;
    spec.build()
}

/// A signal read from text, with its shape.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalFile {
    pub points: Vec<Complex64>,
    pub dims: Dims,
}

pub fn parse_signal(text: &str) -> Result<SignalFile> {
    let mut points = Vec::new();
    let mut shape = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(dims) = comment.trim().strip_prefix("shape") {
                shape = Some(parse_shape(dims.trim()).ok_or_else(|| FormatError::Line {
                    line: i + 1,
                    msg: format!("bad shape '{}', expected RxC", dims.trim()),
                })?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let mut number = |name: &str| -> Result<f64> {
            let field = fields.next().unwrap_or("0");
            let v: f64 = field.parse().map_err(|_| FormatError::Line {
                line: i + 1,
                msg: format!("{name} part '{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(FormatError::Line {
                    line: i + 1,
                    msg: format!("{name} part is not finite"),
                });
            }
            Ok(v)
        };
        let re = number("real")?;
        let im = number("imaginary")?;
        if fields.next().is_some() {
            return Err(FormatError::Line {
                line: i + 1,
                msg: "expected 're,im'".into(),
            });
        }
        points.push(Complex64::new(re, im));
    }
    let dims = match shape {
        Some((rows, cols)) => Dims::TwoD { rows, cols },
        None => Dims::OneD(points.len()),
    };
    if dims.len() != points.len() {
        return Err(FormatError::Invalid(format!(
            "shape {dims:?} needs {} points, found {}",
            dims.len(),
            points.len()
        )));
    }
    Ok(SignalFile { points, dims })
}

fn parse_shape(s: &str) -> Option<(usize, usize)> {
    let (r, c) = s.split_once('x')?;
    Some((r.trim().parse().ok()?, c.trim().parse().ok()?))
}

pub fn write_signal(points: &[Complex64], dims: Dims) -> String {
    let mut out = String::new();
    if let Dims::TwoD { rows, cols } = dims {
        out.push_str(&format!("# shape {rows}x{cols}\n"));
    }
    for z in points {
        out.push_str(&format!("{},{}\n", z.re, z.im));
    }
    out
}

/// Reads a P2 or P5 PGM image.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(FormatError::Binary {
                offset: start,
                msg: "unexpected end of PGM data".into(),
            });
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    let number = |pos: &mut usize, what: &str| -> Result<usize> {
        let at = *pos;
        let t = token(pos)?;
        t.parse().map_err(|_| FormatError::Binary {
            offset: at,
            msg: format!("bad {what} '{t}'"),
        })
    };
    let cols = number(&mut pos, "width")?;
    let rows = number(&mut pos, "height")?;
    let maxval = number(&mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(FormatError::Binary {
            offset: pos,
            msg: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    let count = rows * cols;
    let raw: Vec<usize> = match magic.as_str() {
        "P2" => (0..count)
            .map(|_| number(&mut pos, "pixel"))
            .collect::<Result<_>>()?,
        "P5" => {
            pos += 1;
            let width = if maxval < 256 { 1 } else { 2 };
            let data = bytes.get(pos..pos + count * width).ok_or(FormatError::Binary {
                offset: bytes.len(),
                msg: format!("expected {} bytes of pixel data", count * width),
            })?;
            data.chunks(width)
                .map(|c| c.iter().fold(0usize, |acc, &b| acc << 8 | b as usize))
                .collect()
        }
        other => {
            return Err(FormatError::Binary {
                offset: 0,
                msg: format!("unsupported PGM magic '{other}'"),
            })
        }
    };
    if let Some(v) = raw.iter().find(|&&v| v > maxval) {
        return Err(FormatError::Invalid(format!("pixel {v} exceeds maxval {maxval}")));
    }
    let pixels = raw.into_iter().map(|v| v as f64 / maxval as f64).collect();
    Ok(Image { rows, cols, pixels })
}

/// ASCII PGM with pixels scaled to `0..=maxval`.
pub fn write_pgm(image: &Image, maxval: u16) -> String {
    let mut out = format!("P2\n{} {}\n{maxval}\n", image.cols, image.rows);
    for row in image.pixels.chunks(image.cols) {
        let line: Vec<String> = row
            .iter()
            .map(|p| ((p.clamp(0.0, 1.0) * maxval as f64).round() as u32).to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 8]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u16(VERSION);
        w
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn params(&mut self, p: &SchemeParams) {
        let json = serde_json::to_vec(p).expect("params serialize");
        self.u32(json.len() as u32);
        self.0.extend_from_slice(&json);
        self.0.extend_from_slice(&Sha256::digest(&json));
    }
    fn residue(&mut self, r: &Residue) {
        r.limbs().iter().for_each(|&l| self.u64(l));
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8], magic: &[u8; 8], what: &str) -> Result<Self> {
        let mut r = Reader { data, pos: 0 };
        if r.take(8)? != magic {
            return Err(r.err_at(0, format!("not a {what} file (bad magic)")));
        }
        let v = r.u16()?;
        if v != VERSION {
            return Err(r.err_at(8, format!("unsupported version {v}")));
        }
        Ok(r)
    }
    fn err_at(&self, offset: usize, msg: String) -> FormatError {
        FormatError::Binary { offset, msg }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .data
            .get(self.pos..self.pos.saturating_add(n))
            .ok_or_else(|| self.err_at(self.pos, format!("truncated: needed {n} more bytes")))?;
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn params(&mut self) -> Result<SchemeParams> {
        let at = self.pos;
        let len = self.u32()? as usize;
        let json = self.take(len)?;
        let hash = self.take(32)?;
        if Sha256::digest(json).as_slice() != hash {
            return Err(self.err_at(at, "parameter hash does not match the embedded parameters".into()));
        }
        let p: SchemeParams =
            serde_json::from_slice(json).map_err(|e| self.err_at(at, format!("bad parameters: {e}")))?;
        p.validate()?;
        Ok(p)
    }
    fn residue(&mut self, p: &SchemeParams) -> Result<Residue> {
        let at = self.pos;
        let limbs: Vec<u64> = (0..p.q().limb_count()).map(|_| self.u64()).collect::<Result<_>>()?;
        p.q().from_limbs(&limbs)
            .ok_or_else(|| self.err_at(at, "residue not reduced modulo q".into()))
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(self.err_at(self.pos, "trailing bytes".into()));
        }
        Ok(())
    }
}

pub enum KeyFile {
    Public(PublicKey),
    Secret(SecretKey),
}

fn write_key(kind: u8, params: &SchemeParams, rows: &[Vec<Residue>]) -> Vec<u8> {
    let mut w = Writer::new(KEY_MAGIC);
    w.u8(kind);
    w.params(params);
    w.u32(params.q().limb_count() as u32);
    w.u32(rows.len() as u32);
    w.u32(rows.first().map_or(0, Vec::len) as u32);
    rows.iter().flatten().for_each(|r| w.residue(r));
    w.0
}

pub fn write_public_key(pk: &PublicKey) -> Vec<u8> {
    write_key(0, pk.params(), pk.rows())
}

pub fn write_secret_key(sk: &SecretKey) -> Vec<u8> {
    write_key(1, sk.params(), &[sk.vector().to_vec()])
}

pub fn read_key(bytes: &[u8]) -> Result<KeyFile> {
    let mut r = Reader::new(bytes, KEY_MAGIC, "key")?;
    let kind = r.u8()?;
    let params = r.params()?;
    let at = r.pos;
    let limbs = r.u32()? as usize;
    if limbs != params.q().limb_count() {
        return Err(r.err_at(at, format!("limb count {limbs} does not match q")));
    }
    let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
    let mut data = Vec::with_capacity(rows);
    for _ in 0..rows {
        data.push((0..cols).map(|_| r.residue(&params)).collect::<Result<Vec<_>>>()?);
    }
    r.finish()?;
    match kind {
        0 => Ok(KeyFile::Public(PublicKey::from_rows(params, data)?)),
        1 if rows == 1 => Ok(KeyFile::Secret(SecretKey::from_vector(params, data.remove(0))?)),
        _ => Err(FormatError::Invalid(format!("bad key kind {kind} with {rows} rows"))),
    }
}

/// One stored bit of an encrypted word.
#[derive(Clone, Debug, PartialEq)]
pub enum StoredBit {
    Const(bool),
    Cipher(Ciphertext),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CipherPayload {
    Clear(Vec<bool>),
    Fhe { params: SchemeParams, bits: Vec<StoredBit> },
}

impl CipherPayload {
    pub fn len(&self) -> usize {
        match self {
            CipherPayload::Clear(b) => b.len(),
            CipherPayload::Fhe { bits, .. } => bits.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A signal of fixed-point words, encrypted or clear.
#[derive(Clone, Debug, PartialEq)]
pub struct CipherFile {
    pub format: FixedFormat,
    pub dims: Dims,
    pub payload: CipherPayload,
}

pub fn write_cipher_file(file: &CipherFile) -> Vec<u8> {
    let mut w = Writer::new(CIPHER_MAGIC);
    w.u8(matches!(file.payload, CipherPayload::Fhe { .. }) as u8);
    w.u32(file.format.total_bits());
    w.u32(file.format.frac_bits());
    match file.dims {
        Dims::OneD(m) => {
            w.u8(1);
            w.u64(m as u64);
            w.u64(0);
        }
        Dims::TwoD { rows, cols } => {
            w.u8(2);
            w.u64(rows as u64);
            w.u64(cols as u64);
        }
    }
    match &file.payload {
        CipherPayload::Clear(bits) => {
            w.u64(bits.len() as u64);
            for chunk in bits.chunks(8) {
                w.u8(chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b as u8) << i));
            }
        }
        CipherPayload::Fhe { params, bits } => {
            w.params(params);
            w.u64(bits.len() as u64);
            for bit in bits {
                match bit {
                    StoredBit::Const(v) => w.u8(*v as u8),
                    StoredBit::Cipher(ct) => {
                        w.u8(2);
                        w.u32(ct.level());
                        w.f64(ct.noise_ceiling());
                        ct.matrix().words().iter().for_each(|&x| w.u64(x));
                    }
                }
            }
        }
    }
    w.0
}

pub fn read_cipher_file(bytes: &[u8]) -> Result<CipherFile> {
    let mut r = Reader::new(bytes, CIPHER_MAGIC, "ciphertext")?;
    let kind = r.u8()?;
    let at = r.pos;
    let format = FixedFormat::new(r.u32()?, r.u32()?)
        .map_err(|e| r.err_at(at, e.to_string()))?;
    let at = r.pos;
    let (shape, d0, d1) = (r.u8()?, r.u64()? as usize, r.u64()? as usize);
    let dims = match shape {
        1 => Dims::OneD(d0),
        2 => Dims::TwoD { rows: d0, cols: d1 },
        s => return Err(r.err_at(at, format!("bad shape tag {s}"))),
    };
    let params = match kind {
        0 => None,
        1 => Some(r.params()?),
        k => return Err(r.err_at(8 + 2, format!("bad container kind {k}"))),
    };
    let at = r.pos;
    let count = r.u64()? as usize;
    let expected = dims.len().saturating_mul(2 * format.width());
    if count != expected {
        return Err(r.err_at(at, format!("{count} bits stored, shape and format need {expected}")));
    }
    let payload = match params {
        None => {
            let bytes = r.take(count.div_ceil(8))?;
            CipherPayload::Clear((0..count).map(|i| (bytes[i / 8] >> (i % 8)) & 1 == 1).collect())
        }
        Some(params) => {
            let n = params.n_ct();
            let words = n.div_ceil(64) * n;
            let mut bits = Vec::with_capacity(count);
            for _ in 0..count {
                let at = r.pos;
                bits.push(match r.u8()? {
                    0 => StoredBit::Const(false),
                    1 => StoredBit::Const(true),
                    2 => {
                        let level = r.u32()?;
                        let ceiling = r.f64()?;
                        let data: Vec<u64> = (0..words).map(|_| r.u64()).collect::<Result<_>>()?;
                        let matrix = BitMatrix::from_words(n, n, data)
                            .ok_or_else(|| r.err_at(at, "ciphertext padding bits set".into()))?;
                        StoredBit::Cipher(Ciphertext::from_parts(matrix, level, ceiling))
                    }
                    t => return Err(r.err_at(at, format!("bad bit tag {t}"))),
                });
            }
            CipherPayload::Fhe { params, bits }
        }
    };
    r.finish()?;
    Ok(CipherFile { format, dims, payload })
}
