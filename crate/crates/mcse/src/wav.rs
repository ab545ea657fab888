//! WAV reading and writing for multichannel waveforms.

use std::path::Path;

use hound::{SampleFormat, WavSpec};
use mcse_core::signal::{MultichannelWaveform, Waveform};

use crate::error::{CoreContext, Error, Result};

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    Float32,
    Pcm16,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav { path: path.to_path_buf(), source }
}

/// Read every channel of a WAV file. Integer formats are scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<MultichannelWaveform> {
    let mut reader = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::format(path, "file declares zero channels"));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => {
            reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>().map_err(wav_err(path))?
        }
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err(path))?
        }
    };
    let frames = interleaved.len() / channels;
    let waves = (0..channels)
        .map(|m| Waveform::new((0..frames).map(|i| interleaved[i * channels + m]).collect(), spec.sample_rate))
        .collect::<mcse_core::Result<Vec<_>>>()
        .context(|| format!("{}: unusable samples", path.display()))?;
    MultichannelWaveform::new(waves).context(|| format!("{}: unusable channels", path.display()))
}

/// Read a single-channel file, optionally insisting on a sample rate.
pub fn read_mono(path: &Path, expected_rate: Option<u32>) -> Result<Waveform> {
    let wave = read_wav(path)?;
    if wave.num_channels() != 1 {
        return Err(Error::format(path, format!("expected a mono file, found {} channels", wave.num_channels())));
    }
    if let Some(fs) = expected_rate {
        if wave.sample_rate_hz() != fs {
            return Err(Error::format(
                path,
                format!("sample rate is {} Hz but {} Hz is required", wave.sample_rate_hz(), fs),
            ));
        }
    }
    Ok(wave.into_channels().remove(0))
}

pub fn write_wav(path: &Path, wave: &MultichannelWaveform, encoding: Encoding) -> Result<()> {
    let (bits, format) = match encoding {
        Encoding::Float32 => (32, SampleFormat::Float),
        Encoding::Pcm16 => (16, SampleFormat::Int),
    };
    let channels = u16::try_from(wave.num_channels()).map_err(|_| Error::format(path, "too many channels"))?;
    let spec = WavSpec { channels, sample_rate: wave.sample_rate_hz(), bits_per_sample: bits, sample_format: format };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err(path))?;
    for i in 0..wave.len() {
        for ch in wave.channels() {
            let s = ch.samples[i];
            match encoding {
                Encoding::Float32 => writer.write_sample(s as f32),
                Encoding::Pcm16 => writer.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            }
            .map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))
}

pub fn write_mono(path: &Path, wave: &Waveform, encoding: Encoding) -> Result<()> {
    let multi = MultichannelWaveform::new(vec![wave.clone()]).context(|| format!("{}", path.display()))?;
    write_wav(path, &multi, encoding)
}

/// Round every sample to the nearest f32, which is what a float WAV holds.
pub fn quantize_f32(wave: &MultichannelWaveform) -> MultichannelWaveform {
    let channels = wave
        .channels()
        .iter()
        .map(|c| Waveform { samples: c.samples.iter().map(|&s| s as f32 as f64).collect(), sample_rate_hz: c.sample_rate_hz })
        .collect();
    MultichannelWaveform::new(channels).expect("shape is unchanged")
}
