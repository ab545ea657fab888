//! RIR files: a float32 multichannel WAV plus a JSON sidecar.

use std::path::{Path, PathBuf};

use mcse_core::room::{self, Rir, RoomSpec};
use mcse_core::signal::{MultichannelWaveform, Waveform};
use serde::{Deserialize, Serialize};

use crate::error::{CoreContext, Result};
use crate::json;
use crate::wav::{self, Encoding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirSidecar {
    pub room: RoomSpec,
    pub sample_rate_hz: u32,
    pub direct_path_delays: Vec<usize>,
    pub num_samples: usize,
    /// Schroeder estimate on the reference channel; absent for anechoic rooms.
    pub estimated_t60: Option<f64>,
}

pub fn sidecar_path(wav_path: &Path) -> PathBuf {
    wav_path.with_extension("json")
}

/// Write `rir` to `wav_path` and its sidecar beside it.
pub fn export_rir(wav_path: &Path, rir: &Rir, room: &RoomSpec) -> Result<RirSidecar> {
    let channels = rir
        .channels
        .iter()
        .map(|h| Waveform::new(h.clone(), rir.sample_rate_hz))
        .collect::<mcse_core::Result<Vec<_>>>()
        .and_then(MultichannelWaveform::new)
        .context(|| format!("{}: impulse response", wav_path.display()))?;
    wav::write_wav(wav_path, &channels, Encoding::Float32)?;
    let sidecar = RirSidecar {
        room: room.clone(),
        sample_rate_hz: rir.sample_rate_hz,
        direct_path_delays: rir.direct_path_delays.clone(),
        num_samples: rir.len(),
        estimated_t60: if room.t60 > 0.0 { room::estimate_t60(rir).ok() } else { None },
    };
    json::write(&sidecar_path(wav_path), &sidecar)?;
    Ok(sidecar)
}

pub fn import_rir(wav_path: &Path) -> Result<(Rir, RirSidecar)> {
    let sidecar: RirSidecar = json::read(&sidecar_path(wav_path))?;
    let wave = wav::read_wav(wav_path)?;
    if wave.sample_rate_hz() != sidecar.sample_rate_hz {
        return Err(crate::Error::format(
            wav_path,
            format!("WAV is {} Hz but the sidecar says {} Hz", wave.sample_rate_hz(), sidecar.sample_rate_hz),
        ));
    }
    let rir = Rir {
        channels: wave.into_channels().into_iter().map(|w| w.samples).collect(),
        sample_rate_hz: sidecar.sample_rate_hz,
        direct_path_delays: sidecar.direct_path_delays.clone(),
    };
    Ok((rir, sidecar))
}
