//! On-disk formats: raw I/Q files with JSON sidecars, and FIR tap JSON.
//!
//! An I/Q file is little-endian interleaved `f32` (`I0, Q0, I1, Q1, ...`). Its
//! sidecar lives next to it with the extension `.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{FirTaps, IqSequence, C64};

pub const IQ_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IqDescriptor {
    pub version: u32,
    pub sample_count: usize,
    pub class_label: usize,
    pub channel_seed: u64,
    pub impairment_id: usize,
}

pub fn encode_iq(x: &IqSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(x.len() * 8);
    for s in x.samples() {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_iq(bytes: &[u8]) -> Result<IqSequence> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "I/Q payload of {} bytes is not a whole number of f32 pairs",
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            C64::new(re as f64, im as f64)
        })
        .collect();
    IqSequence::new(samples)
}

pub fn sidecar_path(iq_path: &Path) -> PathBuf {
    iq_path.with_extension("json")
}

pub fn write_iq_file(path: &Path, x: &IqSequence, desc: &IqDescriptor) -> Result<()> {
    if desc.sample_count != x.len() {
        return Err(Error::InvalidArgument(format!(
            "descriptor says {} samples, sequence has {}",
            desc.sample_count,
            x.len()
        )));
    }
    fs::write(path, encode_iq(x))?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(desc)?)?;
    Ok(())
}

pub fn read_iq_file(path: &Path) -> Result<(IqSequence, IqDescriptor)> {
    let desc: IqDescriptor = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if desc.version != IQ_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported I/Q descriptor version {}", desc.version)));
    }
    let x = decode_iq(&fs::read(path)?)?;
    if x.len() != desc.sample_count {
        return Err(Error::Format(format!(
            "{}: descriptor says {} samples, file holds {}",
            path.display(),
            desc.sample_count,
            x.len()
        )));
    }
    Ok((x, desc))
}

/// JSON form of [`FirTaps`]: `{m, taps: [[re, im], ...], epsilon}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TapsFile {
    pub m: usize,
    pub taps: Vec<[f64; 2]>,
    pub epsilon: f64,
}

impl From<&FirTaps> for TapsFile {
    fn from(phi: &FirTaps) -> Self {
        Self {
            m: phi.len(),
            taps: phi.taps().iter().map(|t| [t.re, t.im]).collect(),
            epsilon: phi.epsilon(),
        }
    }
}

impl TryFrom<TapsFile> for FirTaps {
    type Error = Error;

    fn try_from(file: TapsFile) -> Result<Self> {
        if file.m != file.taps.len() {
            return Err(Error::Format(format!("m = {} but {} taps listed", file.m, file.taps.len())));
        }
        FirTaps::new(file.taps.iter().map(|t| C64::new(t[0], t[1])).collect())
    }
}

pub fn taps_to_json(phi: &FirTaps) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TapsFile::from(phi))?)
}

pub fn taps_from_json(s: &str) -> Result<FirTaps> {
    serde_json::from_str::<TapsFile>(s)?.try_into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iq_file_roundtrip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex.iq");
        let x = IqSequence::new(vec![C64::new(0.5, -0.25), C64::new(1.0 / 3.0, 2.0)]).unwrap();
        let desc = IqDescriptor {
            version: IQ_FORMAT_VERSION,
            sample_count: 2,
            class_label: 3,
            channel_seed: 99,
            impairment_id: 3,
        };
        write_iq_file(&path, &x, &desc).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 16);
        let (y, d) = read_iq_file(&path).unwrap();
        assert_eq!(d, desc);
        assert_eq!(y.samples()[0], C64::new(0.5, -0.25));
        assert_eq!(y.samples()[1].re, (1.0f64 / 3.0) as f32 as f64);
    }

    #[test]
    fn byte_layout_is_interleaved_le() {
        let x = IqSequence::new(vec![C64::new(1.0, -2.0)]).unwrap();
        let b = encode_iq(&x);
        assert_eq!(&b[..4], &1.0f32.to_le_bytes());
        assert_eq!(&b[4..], &(-2.0f32).to_le_bytes());
        assert!(decode_iq(&b[..7]).is_err());
    }

    #[test]
    fn taps_json_roundtrip() {
        let phi = FirTaps::new(vec![C64::new(0.9, 0.1), C64::new(0.0, -0.2)]).unwrap();
        let s = taps_to_json(&phi).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["m"], 2);
        assert_eq!(v["taps"][1][1], -0.2);
        assert!((v["epsilon"].as_f64().unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(taps_from_json(&s).unwrap(), phi);
    }
}
