//! `.wfld` waveform files.
//!
//! Little-endian layout:
//!
//! | offset | size | content                     |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `WFLD`                |
//! | 4      | 4    | version `u32` = 1           |
//! | 8      | 8    | `num_samples` `u64`         |
//! | 16     | 8    | `sample_rate_hz` `f64`      |
//! | 24     | 8    | `center_wavelength_m` `f64` |
//! | 32     | 8    | `position_km` `f64`         |
//! | 40     | 32·n | records `[XI, XQ, YI, YQ]` as `f64` |
//!
//! A JSON sidecar (`<file>.json`) carries the configuration that produced
//! the waveform.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DualPolField;
use crate::params::{LinkConfig, WdmConfig};
use crate::prng::PrngSpec;

pub const MAGIC: &[u8; 4] = b"WFLD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;
const RECORD_LEN: usize = 32;

pub fn encode_field(field: &DualPolField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * field.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(field.len() as u64).to_le_bytes());
    out.extend_from_slice(&field.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&field.center_wavelength_m().to_le_bytes());
    out.extend_from_slice(&field.position_km().to_le_bytes());
    for (x, y) in field.x().iter().zip(field.y()) {
        for v in [x.re, x.im, y.re, y.im] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self.buf.get(self.pos..end).ok_or_else(|| Error::Decode {
            offset: self.buf.len() as u64,
            reason: format!("truncated while reading {what} (need {N} bytes at offset {})", self.pos),
        })?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length checked"))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take::<8>(what)?))
    }
}

pub fn decode_field(buf: &[u8]) -> Result<DualPolField> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take::<4>("magic")?;
    if &magic != MAGIC {
        return Err(Error::Decode { offset: 0, reason: format!("bad magic {magic:02x?}") });
    }
    let version = u32::from_le_bytes(r.take::<4>("version")?);
    if version != VERSION {
        return Err(Error::Decode { offset: 4, reason: format!("unsupported version {version}") });
    }
    let n = u64::from_le_bytes(r.take::<8>("sample count")?);
    if n == 0 {
        return Err(Error::Decode { offset: 8, reason: "zero samples".into() });
    }
    let sample_rate = r.f64("sample rate")?;
    let wavelength = r.f64("wavelength")?;
    let position = r.f64("position")?;
    let expected = (n as u128) * RECORD_LEN as u128 + HEADER_LEN as u128;
    if (buf.len() as u128) < expected {
        return Err(Error::Decode {
            offset: buf.len() as u64,
            reason: format!("truncated payload: expected {expected} bytes, found {}", buf.len()),
        });
    }
    if (buf.len() as u128) > expected {
        return Err(Error::Decode { offset: expected as u64, reason: "trailing bytes after payload".into() });
    }
    let n = n as usize;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = r.f64("XI")?;
        let xq = r.f64("XQ")?;
        let yi = r.f64("YI")?;
        let yq = r.f64("YQ")?;
        x.push(Complex64::new(xi, xq));
        y.push(Complex64::new(yi, yq));
    }
    DualPolField::with_metadata(x, y, sample_rate, wavelength, position).map_err(|e| Error::Decode {
        offset: 16,
        reason: format!("invalid field contents: {e}"),
    })
}

pub fn write_field(field: &DualPolField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_field(field)).map_err(|e| Error::file(path, e))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<DualPolField> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_field(&buf)
}

/// Configuration sidecar for a waveform file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wdm: Option<WdmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prng: Option<PrngSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_index: Option<usize>,
}

pub fn manifest_path(field_path: impl AsRef<Path>) -> PathBuf {
    let mut s = field_path.as_ref().as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_manifest(manifest: &FieldManifest, field_path: impl AsRef<Path>) -> Result<()> {
    let path = manifest_path(field_path);
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, text).map_err(|e| Error::file(&path, e))
}

pub fn read_manifest(field_path: impl AsRef<Path>) -> Result<FieldManifest> {
    let path = manifest_path(field_path);
    let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
