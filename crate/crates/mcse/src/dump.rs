//! Binary dumps of weights and spectra.
//!
//! Layout: the 8-byte magic `MCSEDUMP`, a little-endian `u64` header
//! length, a UTF-8 JSON header, then the payload as little-endian `f32`
//! pairs `(re, im)` in the order given by the header's `layout`.

use std::io::{Read, Write};
use std::path::Path;

use mcse_core::beamforming::BeamformerWeights;
use mcse_core::room::ArrayGeometry;
use mcse_core::signal::Spectrogram;
use mcse_core::C64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreContext, Error, Result};

pub const MAGIC: &[u8; 8] = b"MCSEDUMP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DumpKind {
    Weights,
    Spectra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub format_version: u32,
    pub kind: DumpKind,
    /// Payload dimensions, outermost first.
    pub shape: Vec<usize>,
    /// Names of the axes in `shape`.
    pub layout: Vec<String>,
    #[serde(default)]
    pub sample_rate_hz: Option<u32>,
    #[serde(default)]
    pub fft_len: Option<usize>,
    #[serde(default)]
    pub array: Option<ArrayGeometry>,
    /// One label per spectrum for spectra dumps (e.g. `T(1)`).
    #[serde(default)]
    pub labels: Vec<String>,
    /// Free-form configuration that produced the payload.
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Descriptive fields shared by both dump kinds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DumpInfo {
    pub sample_rate_hz: Option<u32>,
    pub fft_len: Option<usize>,
    pub array: Option<ArrayGeometry>,
    pub config: serde_json::Value,
}

fn write_dump(path: &Path, header: &DumpHeader, payload: impl Iterator<Item = C64>) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    let mut bytes = Vec::with_capacity(16 + json.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for z in payload {
        bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dump(path: &Path) -> Result<(DumpHeader, Vec<C64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format(path, "not a dump file (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes")) as usize;
    let body = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| Error::format(path, "truncated header"))?;
    let header: DumpHeader =
        serde_json::from_slice(body).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported format_version {}", header.format_version)));
    }
    let payload = &bytes[16 + len..];
    let count: usize = header.shape.iter().product();
    if payload.len() != count * 8 {
        return Err(Error::format(
            path,
            format!("payload holds {} bytes but shape {:?} needs {}", payload.len(), header.shape, count * 8),
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().expect("four bytes"));
            let im = f32::from_le_bytes(c[4..].try_into().expect("four bytes"));
            C64::new(re as f64, im as f64)
        })
        .collect();
    Ok((header, values))
}

fn axes(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn write_weights(path: &Path, weights: &BeamformerWeights, info: &DumpInfo) -> Result<()> {
    let (shape, layout) = match weights.frames() {
        Some(t) => (vec![t, weights.bins(), weights.num_channels()], axes(&["frame", "bin", "channel"])),
        None => (vec![weights.bins(), weights.num_channels()], axes(&["bin", "channel"])),
    };
    let header = DumpHeader {
        format_version: FORMAT_VERSION,
        kind: DumpKind::Weights,
        shape,
        layout,
        sample_rate_hz: info.sample_rate_hz,
        fft_len: info.fft_len,
        array: info.array.clone(),
        labels: Vec::new(),
        config: info.config.clone(),
    };
    write_dump(path, &header, weights.as_slice().iter().copied())
}

pub fn read_weights(path: &Path) -> Result<(BeamformerWeights, DumpHeader)> {
    let (header, values) = read_dump(path)?;
    if header.kind != DumpKind::Weights {
        return Err(Error::format(path, "dump holds spectra, not weights"));
    }
    let (frames, bins, channels) = match header.shape[..] {
        [bins, channels] => (None, bins, channels),
        [frames, bins, channels] => (Some(frames), bins, channels),
        _ => return Err(Error::format(path, format!("weights shape {:?} has the wrong rank", header.shape))),
    };
    let weights =
        BeamformerWeights::from_raw(frames, bins, channels, values).context(|| format!("{}", path.display()))?;
    Ok((weights, header))
}

/// Stack equally shaped spectra under `labels`.
pub fn write_spectra(path: &Path, spectra: &[&Spectrogram], labels: &[String], info: &DumpInfo) -> Result<()> {
    let (frames, bins) = spectra.first().map_or((0, 0), |s| s.shape());
    if spectra.iter().any(|s| s.shape() != (frames, bins)) {
        return Err(Error::format(path, "spectra differ in shape"));
    }
    if labels.len() != spectra.len() {
        return Err(Error::format(path, "one label per spectrum is required"));
    }
    let header = DumpHeader {
        format_version: FORMAT_VERSION,
        kind: DumpKind::Spectra,
        shape: vec![spectra.len(), frames, bins],
        layout: axes(&["spectrum", "frame", "bin"]),
        sample_rate_hz: info.sample_rate_hz,
        fft_len: info.fft_len,
        array: info.array.clone(),
        labels: labels.to_vec(),
        config: info.config.clone(),
    };
    write_dump(path, &header, spectra.iter().flat_map(|s| s.as_slice().iter().copied()))
}

pub fn read_spectra(path: &Path) -> Result<(Vec<Spectrogram>, DumpHeader)> {
    let (header, values) = read_dump(path)?;
    if header.kind != DumpKind::Spectra {
        return Err(Error::format(path, "dump holds weights, not spectra"));
    }
    let [n, frames, bins] = header.shape[..] else {
        return Err(Error::format(path, format!("spectra shape {:?} has the wrong rank", header.shape)));
    };
    let per = frames * bins;
    let spectra = (0..n)
        .map(|k| Spectrogram::from_vec(values[k * per..(k + 1) * per].to_vec(), frames, bins))
        .collect::<mcse_core::Result<Vec<_>>>()
        .context(|| format!("{}", path.display()))?;
    Ok((spectra, header))
}
