//! PGM and DGT serialization, plus synthetic phantoms.
//!
//! DGT layout, all little-endian:
//!
//! ```text
//! "DAG1" | ndim: u32 | dims: ndim × u32 | payload: prod(dims) × f64
//! ```
//!
//! `ndim` is 2 for single-channel tensors (`[H, W]`) and 3 otherwise
//! (`[C, H, W]`).
//!
//! Phantom noise uses ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`),
//! draws uniforms with `rand`'s standard 53-bit `f64` conversion, and turns
//! each pair `(u1, u2)` into two normals by Box–Muller with `1 − u1` in the
//! logarithm.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const DGT_MAGIC: &[u8; 4] = b"DAG1";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::parse(start, format!("{what} out of range")))
    }
}

/// Decodes a P2 or P5 graymap into a `1×H×W` tensor scaled to `[0, 1]`.
pub fn parse_pgm(bytes: &[u8]) -> Result<Tensor> {
    let magic = bytes
        .get(..2)
        .ok_or_else(|| Error::parse(0, "file too short for magic"))?;
    let ascii = match magic {
        b"P2" => true,
        b"P5" => false,
        other => {
            return Err(Error::UnsupportedMagic(
                String::from_utf8_lossy(other).into(),
            ))
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    cur.skip_space_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(maxval_at, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(
            maxval_at,
            format!("maxval {maxval} not in 1..=65535"),
        ));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(maxval_at, "image dimensions overflow"))?;
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(count);

    if ascii {
        for _ in 0..count {
            cur.skip_space_and_comments();
            let at = cur.pos;
            let v = cur.number("pixel value").map_err(|e| match e {
                Error::Parse { offset, .. } if offset >= bytes.len() => {
                    Error::parse(offset, "truncated pixel data")
                }
                other => other,
            })?;
            if v > maxval {
                return Err(Error::parse(
                    at,
                    format!("pixel {v} exceeds maxval {maxval}"),
                ));
            }
            data.push(v as f64 / scale);
        }
    } else {
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(Error::parse(cur.pos, "missing whitespace after maxval")),
        }
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = bytes.get(cur.pos..cur.pos + need).ok_or_else(|| {
            Error::parse(bytes.len(), format!("truncated raster: need {need} bytes"))
        })?;
        if wide {
            for (idx, pair) in raster.chunks_exact(2).enumerate() {
                let v = u16::from_be_bytes([pair[0], pair[1]]) as u64;
                if v > maxval {
                    let at = cur.pos + 2 * idx;
                    return Err(Error::parse(
                        at,
                        format!("pixel {v} exceeds maxval {maxval}"),
                    ));
                }
                data.push(v as f64 / scale);
            }
        } else {
            for (idx, &b) in raster.iter().enumerate() {
                if b as u64 > maxval {
                    let at = cur.pos + idx;
                    return Err(Error::parse(
                        at,
                        format!("pixel {b} exceeds maxval {maxval}"),
                    ));
                }
                data.push(b as f64 / scale);
            }
        }
    }
    Tensor::new(1, height, width, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    parse_pgm(&fs::read(path).map_err(io_err(path))?)
}

/// Encodes a single-channel tensor as binary P5 with maxval 255.
///
/// With `normalize` the range `[min, max]` maps to `[0, 255]` (a constant
/// tensor becomes all 128); otherwise values are clamped to `[0, 1]`. Both
/// round half up.
pub fn encode_pgm(t: &Tensor, normalize: bool) -> Result<Vec<u8>> {
    if t.channels() != 1 {
        return Err(Error::invalid(format!(
            "PGM needs a single channel, got {}",
            t.channels()
        )));
    }
    let (h, w) = t.spatial();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let data = t.as_slice();
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    out.extend(data.iter().map(|&v| {
        let unit = if normalize {
            if hi > lo {
                (v - lo) / (hi - lo)
            } else {
                return 128u8;
            }
        } else {
            v.clamp(0.0, 1.0)
        };
        (unit * 255.0 + 0.5).floor().min(255.0) as u8
    }));
    Ok(out)
}

pub fn write_pgm(t: &Tensor, path: impl AsRef<Path>, normalize: bool) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(t, normalize)?).map_err(io_err(path))
}

pub fn encode_dgt(t: &Tensor) -> Result<Vec<u8>> {
    if let Some(index) = t.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let (c, h, w) = t.shape();
    let dims: Vec<usize> = if c == 1 { vec![h, w] } else { vec![c, h, w] };
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 8 * t.len());
    out.extend_from_slice(DGT_MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dgt(bytes: &[u8]) -> Result<Tensor> {
    let u32_at = |pos: usize| -> Result<u32> {
        bytes
            .get(pos..pos + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| Error::parse(bytes.len(), "truncated header"))
    };
    match bytes.get(..4) {
        Some(m) if m == DGT_MAGIC => {}
        Some(m) => return Err(Error::UnsupportedMagic(String::from_utf8_lossy(m).into())),
        None => return Err(Error::parse(bytes.len(), "truncated magic")),
    }
    let ndim = u32_at(4)? as usize;
    if ndim != 2 && ndim != 3 {
        return Err(Error::parse(4, format!("ndim must be 2 or 3, got {ndim}")));
    }
    let dims = (0..ndim)
        .map(|k| u32_at(8 + 4 * k).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let payload_at = 8 + 4 * ndim;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::parse(8, "dimension product overflows"))?;
    let payload = &bytes[payload_at.min(bytes.len())..];
    if payload.len() < count * 8 {
        return Err(Error::parse(
            bytes.len(),
            format!(
                "truncated payload: need {} bytes, have {}",
                count * 8,
                payload.len()
            ),
        ));
    }
    if payload.len() > count * 8 {
        return Err(Error::parse(
            payload_at + count * 8,
            "trailing bytes after payload",
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let (c, h, w) = match dims[..] {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => unreachable!("ndim checked"),
    };
    Tensor::new(c, h, w, data).map_err(|e| match e {
        Error::NonFinite { index } => {
            Error::parse(payload_at + 8 * index, "non-finite payload value")
        }
        other => other,
    })
}

pub fn write_dgt(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dgt(t)?).map_err(io_err(path))
}

pub fn read_dgt(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode_dgt(&fs::read(path).map_err(io_err(path))?)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Phantom {
    /// 1 where `ρ <= radius`.
    Disk { radius: f64 },
    /// 1 where `|ρ − radius| <= thickness / 2`.
    Ring { radius: f64, thickness: f64 },
    /// Alternating unit squares of side `cell`.
    Checker { cell: usize },
    /// Sum of Gaussian bumps, one per sigma, scaled to a peak of 1. Bump `k`
    /// of `K` sits at distance `min(H, W)·(0.1 + 0.1·(k mod 3))` from the
    /// center at angle `2πk/K + 0.5`.
    SmoothBlob { sigmas: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub phantom: Phantom,
    pub height: usize,
    pub width: usize,
    /// Defaults to the pixel `(H/2, W/2)`, rounded down.
    pub center: Option<(f64, f64)>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(phantom: Phantom, height: usize, width: usize) -> Self {
        Self {
            phantom,
            height,
            width,
            center: None,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn center(mut self, row: f64, col: f64) -> Self {
        self.center = Some((row, col));
        self
    }

    pub fn noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    pub fn resolved_center(&self) -> (f64, f64) {
        self.center
            .unwrap_or(((self.height / 2) as f64, (self.width / 2) as f64))
    }
}

/// Standard normals from ChaCha20 via Box–Muller.
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1: f64 = self.rng.random();
        let u2: f64 = self.rng.random();
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        let angle = 2.0 * PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

pub fn synth(spec: &SynthSpec) -> Result<Tensor> {
    let (h, w) = (spec.height, spec.width);
    if h == 0 || w == 0 {
        return Err(Error::invalid("phantom dimensions must be positive"));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::invalid("noise sigma must be finite and >= 0"));
    }
    let (ci, cj) = spec.resolved_center();
    if !(ci.is_finite() && cj.is_finite()) {
        return Err(Error::invalid("phantom center must be finite"));
    }
    let rho = |i: usize, j: usize| (i as f64 - ci).hypot(j as f64 - cj);

    let mut t = match &spec.phantom {
        Phantom::Disk { radius } => {
            if !(*radius >= 0.0 && radius.is_finite()) {
                return Err(Error::invalid("disk radius must be >= 0"));
            }
            Tensor::from_fn(1, h, w, |_, i, j| f64::from(u8::from(rho(i, j) <= *radius)))
        }
        Phantom::Ring { radius, thickness } => {
            if !(*radius >= 0.0 && radius.is_finite() && *thickness > 0.0 && thickness.is_finite())
            {
                return Err(Error::invalid("ring needs radius >= 0 and thickness > 0"));
            }
            Tensor::from_fn(1, h, w, |_, i, j| {
                f64::from(u8::from((rho(i, j) - radius).abs() <= thickness / 2.0))
            })
        }
        Phantom::Checker { cell } => {
            if *cell == 0 {
                return Err(Error::invalid("checker cell must be >= 1"));
            }
            Tensor::from_fn(1, h, w, |_, i, j| ((i / cell + j / cell) % 2) as f64)
        }
        Phantom::SmoothBlob { sigmas } => {
            if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::invalid(
                    "blob sigmas must be a non-empty list of positive values",
                ));
            }
            let k_total = sigmas.len() as f64;
            let short = h.min(w) as f64;
            let centers: Vec<(f64, f64, f64)> = sigmas
                .iter()
                .enumerate()
                .map(|(k, &s)| {
                    let d = short * (0.1 + 0.1 * (k % 3) as f64);
                    let phi = 2.0 * PI * k as f64 / k_total + 0.5;
                    (ci + d * phi.cos(), cj + d * phi.sin(), s)
                })
                .collect();
            let raw = Tensor::from_fn(1, h, w, |_, i, j| {
                centers
                    .iter()
                    .map(|&(bi, bj, s)| {
                        let d2 = (i as f64 - bi).powi(2) + (j as f64 - bj).powi(2);
                        (-d2 / (2.0 * s * s)).exp()
                    })
                    .sum()
            });
            let peak = raw.as_slice().iter().copied().fold(0.0, f64::max);
            raw.map(|v| v / peak)
        }
    };

    if spec.noise_sigma > 0.0 {
        let mut normals = NormalStream::new(spec.seed);
        for v in t.as_mut_slice() {
            *v += spec.noise_sigma * normals.next_normal();
        }
    }
    Ok(t)
}
