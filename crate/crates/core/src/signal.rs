//! Waveforms, spectrograms and the framed analysis/synthesis between them.
//!
//! Analysis reflect-pads half a window on both sides, frames with the
//! configured hop and takes a one-sided FFT of each windowed frame.
//! Synthesis overlap-adds the windowed inverse frames and divides by the
//! summed squared window, which reconstructs every original sample exactly
//! (up to rounding) whenever the squared window sum stays above `1e-8`.
//!
//! Energy bookkeeping: for every frame, `sum_k g_k |X_k|^2 = fft_len *
//! sum_n (w_n x_n)^2` where `g_k` is 1 for the DC and Nyquist bins and 2
//! otherwise (frame-wise Parseval for a one-sided spectrum).

use crate::fft::{self, RealFft};
use crate::prelude::*;
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};

const SYNTHESIS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Waveform { samples, sample_rate_hz })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Self {
        Waveform { samples: vec![0.0; len], sample_rate_hz }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Waveform {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// An `M`-channel recording; channel 0 is the reference microphone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultichannelWaveform {
    channels: Vec<Waveform>,
}

impl MultichannelWaveform {
    pub fn new(channels: Vec<Waveform>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("a multichannel waveform needs at least one channel"))?;
        for (m, ch) in channels.iter().enumerate().skip(1) {
            if ch.len() != first.len() || ch.sample_rate_hz != first.sample_rate_hz {
                return Err(Error::invalid(format!(
                    "channel {m} has {} samples at {} Hz, channel 0 has {} at {} Hz",
                    ch.len(),
                    ch.sample_rate_hz,
                    first.len(),
                    first.sample_rate_hz
                )));
            }
        }
        Ok(MultichannelWaveform { channels })
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate_hz: u32) -> Self {
        MultichannelWaveform {
            channels: (0..num_channels.max(1)).map(|_| Waveform::zeros(len, sample_rate_hz)).collect(),
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.channels[0].sample_rate_hz
    }

    pub fn channels(&self) -> &[Waveform] {
        &self.channels
    }

    pub fn channel(&self, m: usize) -> &Waveform {
        &self.channels[m]
    }

    pub fn reference(&self) -> &Waveform {
        &self.channels[0]
    }

    pub fn into_channels(self) -> Vec<Waveform> {
        self.channels
    }

    pub fn peak(&self) -> f64 {
        self.channels.iter().fold(0.0, |m, c| m.max(c.peak()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        MultichannelWaveform { channels: self.channels.iter().map(|c| c.scaled(gain)).collect() }
    }

    /// Samplewise sum with another recording of the same shape.
    pub fn add(&self, other: &MultichannelWaveform) -> Result<Self> {
        if self.num_channels() != other.num_channels() || self.len() != other.len() {
            return Err(Error::invalid("cannot add multichannel waveforms of different shapes"));
        }
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| Waveform {
                samples: a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect(),
                sample_rate_hz: a.sample_rate_hz,
            })
            .collect();
        Ok(MultichannelWaveform { channels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Periodic raised-cosine (Hann) window.
    #[default]
    Hann,
    SqrtHann,
    Hamming,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * core::f64::consts::PI * i as f64 / n;
                match self {
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::SqrtHann => (0.5 - 0.5 * phase.cos()).sqrt(),
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop_len: usize,
    pub fft_len: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 20 ms Hann window, 50% overlap and a 320-point FFT at 16 kHz.
    fn default() -> Self {
        StftConfig { window_len: 320, hop_len: 160, fft_len: 320, window: WindowKind::Hann }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop_len == 0 || self.hop_len > self.window_len || self.window_len > self.fft_len {
            return Err(Error::invalid(format!(
                "STFT requires 0 < hop_len <= window_len <= fft_len, got {}/{}/{}",
                self.hop_len, self.window_len, self.fft_len
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    fn pad(&self) -> usize {
        self.window_len / 2
    }

    /// Number of frames produced for a signal of `len` samples. The last
    /// frame is zero-extended so every input sample is covered.
    pub fn frames_for(&self, len: usize) -> usize {
        let padded = len + 2 * self.pad();
        1 + (padded.saturating_sub(self.window_len)).div_ceil(self.hop_len)
    }

    /// Number of samples produced by synthesis from `frames` frames.
    pub fn samples_for(&self, frames: usize) -> usize {
        ((frames - 1) * self.hop_len + self.window_len).saturating_sub(2 * self.pad())
    }

    /// Centre frequency of bin `k` for a given sample rate.
    pub fn bin_hz(&self, k: usize, sample_rate_hz: u32) -> f64 {
        k as f64 * sample_rate_hz as f64 / self.fft_len as f64
    }
}

/// Single-channel complex spectrogram, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<C64>,
    frames: usize,
    bins: usize,
}

impl Spectrogram {
    pub fn from_vec(data: Vec<C64>, frames: usize, bins: usize) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::invalid(format!(
                "spectrogram data has {} entries, expected {frames} x {bins}",
                data.len()
            )));
        }
        Ok(Spectrogram { data, frames, bins })
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        Spectrogram { data: vec![C64::new(0.0, 0.0); frames * bins], frames, bins }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn get(&self, t: usize, f: usize) -> C64 {
        self.data[t * self.bins + f]
    }

    pub fn set(&mut self, t: usize, f: usize, v: C64) {
        self.data[t * self.bins + f] = v;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn frame(&self, t: usize) -> &[C64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Spectrogram { data: self.data.iter().map(|&z| f(z)).collect(), frames: self.frames, bins: self.bins }
    }

    pub(crate) fn check_same_shape(&self, other: &Spectrogram, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Spectrogram) -> Result<Self> {
        self.check_same_shape(other, "spectrogram sum")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Spectrogram { data, frames: self.frames, bins: self.bins })
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|z| z * k)
    }

    /// Largest absolute entrywise difference to another spectrogram.
    pub fn max_abs_diff(&self, other: &Spectrogram) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// `M x frames x bins` complex tensor, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSpectrogram {
    data: Vec<C64>,
    channels: usize,
    frames: usize,
    bins: usize,
}

impl MultichannelSpectrogram {
    pub fn from_channels(channels: Vec<Spectrogram>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("a multichannel spectrogram needs at least one channel"))?;
        let (frames, bins) = first.shape();
        let mut data = Vec::with_capacity(channels.len() * frames * bins);
        for (m, ch) in channels.iter().enumerate() {
            if ch.shape() != (frames, bins) {
                return Err(Error::invalid(format!(
                    "channel {m} has shape {:?}, channel 0 has {:?}",
                    ch.shape(),
                    (frames, bins)
                )));
            }
            data.extend_from_slice(&ch.data);
        }
        Ok(MultichannelSpectrogram { data, channels: channels.len(), frames, bins })
    }

    pub fn zeros(channels: usize, frames: usize, bins: usize) -> Self {
        MultichannelSpectrogram { data: vec![C64::new(0.0, 0.0); channels * frames * bins], channels, frames, bins }
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.frames, self.bins)
    }

    #[inline]
    pub fn get(&self, m: usize, t: usize, f: usize) -> C64 {
        self.data[(m * self.frames + t) * self.bins + f]
    }

    #[inline]
    pub fn set(&mut self, m: usize, t: usize, f: usize, v: C64) {
        self.data[(m * self.frames + t) * self.bins + f] = v;
    }

    /// The `M`-vector observed at one time-frequency point.
    pub fn vector(&self, t: usize, f: usize) -> Vec<C64> {
        (0..self.channels).map(|m| self.get(m, t, f)).collect()
    }

    pub fn channel(&self, m: usize) -> Spectrogram {
        let n = self.frames * self.bins;
        Spectrogram { data: self.data[m * n..(m + 1) * n].to_vec(), frames: self.frames, bins: self.bins }
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn check_same_shape(&self, other: &MultichannelSpectrogram, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &MultichannelSpectrogram) -> Result<Self> {
        self.check_same_shape(other, "multichannel sum")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(MultichannelSpectrogram { data, ..*self })
    }

    pub fn sub(&self, other: &MultichannelSpectrogram) -> Result<Self> {
        self.check_same_shape(other, "multichannel difference")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(MultichannelSpectrogram { data, ..*self })
    }

    pub fn max_abs_diff(&self, other: &MultichannelSpectrogram) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

/// Shared analysis state so multichannel transforms plan once.
struct Analyzer {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: RealFft,
}

impl Analyzer {
    fn new(cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Analyzer { cfg: *cfg, window: cfg.window.coefficients(cfg.window_len), fft: RealFft::new(cfg.fft_len) })
    }

    fn analyze(&self, x: &[f64]) -> Result<Spectrogram> {
        let cfg = &self.cfg;
        if x.len() < cfg.window_len {
            return Err(Error::invalid(format!(
                "signal of {} samples is shorter than one {}-sample window",
                x.len(),
                cfg.window_len
            )));
        }
        if cfg.pad() >= x.len() {
            return Err(Error::invalid("signal too short for reflect padding"));
        }
        let frames = cfg.frames_for(x.len());
        let mut padded = reflect_pad(x, cfg.pad());
        padded.resize((frames - 1) * cfg.hop_len + cfg.window_len, 0.0);
        let bins = self.fft.bins();
        let mut out = Spectrogram::zeros(frames, bins);
        let mut frame = vec![0.0; cfg.window_len];
        for t in 0..frames {
            let start = t * cfg.hop_len;
            for (i, v) in frame.iter_mut().enumerate() {
                *v = padded[start + i] * self.window[i];
            }
            self.fft.forward(&frame, &mut out.data[t * bins..(t + 1) * bins]);
        }
        Ok(out)
    }

    fn synthesize(&self, spec: &Spectrogram, len: Option<usize>) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        if spec.bins != cfg.bins() {
            return Err(Error::invalid(format!(
                "spectrogram has {} bins but the configuration implies {}",
                spec.bins,
                cfg.bins()
            )));
        }
        if spec.frames == 0 {
            return Err(Error::invalid("spectrogram has no frames"));
        }
        let total = (spec.frames - 1) * cfg.hop_len + cfg.window_len;
        let mut acc = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut buf = vec![0.0; cfg.fft_len];
        for t in 0..spec.frames {
            self.fft.inverse(spec.frame(t), &mut buf);
            let start = t * cfg.hop_len;
            for i in 0..cfg.window_len {
                acc[start + i] += buf[i] * self.window[i];
                norm[start + i] += self.window[i] * self.window[i];
            }
        }
        let pad = cfg.pad();
        let natural = cfg.samples_for(spec.frames);
        let out_len = len.unwrap_or(natural);
        if out_len > natural {
            return Err(Error::invalid(format!(
                "requested {out_len} samples but only {natural} can be synthesized"
            )));
        }
        Ok((pad..pad + out_len).map(|i| acc[i] / norm[i].max(SYNTHESIS_FLOOR)).collect())
    }
}

pub fn stft(wave: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    Analyzer::new(cfg)?.analyze(&wave.samples)
}

/// Overlap-add synthesis with squared-window normalization. The output has
/// `(frames - 1) * hop_len` samples for even window lengths, which is within
/// one hop of the analysed signal; use [`istft_with_len`] to trim exactly.
pub fn istft(spec: &Spectrogram, cfg: &StftConfig, sample_rate_hz: u32) -> Result<Waveform> {
    let samples = Analyzer::new(cfg)?.synthesize(spec, None)?;
    Waveform::new(samples, sample_rate_hz)
}

pub fn istft_with_len(spec: &Spectrogram, cfg: &StftConfig, sample_rate_hz: u32, len: usize) -> Result<Waveform> {
    let samples = Analyzer::new(cfg)?.synthesize(spec, Some(len))?;
    Waveform::new(samples, sample_rate_hz)
}

pub fn stft_multichannel(wave: &MultichannelWaveform, cfg: &StftConfig) -> Result<MultichannelSpectrogram> {
    let analyzer = Analyzer::new(cfg)?;
    let channels = wave.channels().iter().map(|c| analyzer.analyze(&c.samples)).collect::<Result<Vec<_>>>()?;
    MultichannelSpectrogram::from_channels(channels)
}

/// Power-law magnitude compression, `|z| -> |z|^factor` with the phase kept.
pub fn compress_power(spec: &Spectrogram, factor: f64) -> Result<Spectrogram> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::invalid(format!("compression factor must lie in (0, 1], got {factor}")));
    }
    Ok(spec.map(|z| compress_value(z, factor)))
}

pub(crate) fn compress_value(z: C64, factor: f64) -> C64 {
    let mag = z.norm();
    if mag == 0.0 {
        z
    } else {
        z * mag.powf(factor - 1.0)
    }
}

/// Full linear convolution, `a.len() + b.len() - 1` samples.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    fft::convolve(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn sine(len: usize, cycles_per_sample: f64) -> Waveform {
        Waveform::new((0..len).map(|n| (2.0 * PI * cycles_per_sample * n as f64).sin()).collect(), 16000).unwrap()
    }

    #[test]
    fn default_config_has_161_bins() {
        let wave = sine(6 * 16000, 0.01);
        let spec = stft(&wave, &StftConfig::default()).unwrap();
        assert_eq!(spec.bins(), 161);
        assert_eq!(spec.frames(), 1 + 6 * 16000 / 160);
    }

    #[test]
    fn short_signal_is_rejected() {
        let err = stft(&Waveform::zeros(100, 16000), &StftConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn zero_input_gives_zero_spectrogram_and_back() {
        let spec = stft(&Waveform::zeros(2000, 16000), &StftConfig::default()).unwrap();
        assert!(spec.as_slice().iter().all(|z| z.norm() == 0.0));
        let back = istft(&spec, &StftConfig::default(), 16000).unwrap();
        assert!(back.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn on_bin_sinusoid_concentrates_in_its_bin() {
        // Direct DFT of one rectangular frame of cos(2 pi k n / N): N/2 at bin k,
        // zero elsewhere. Edge frames see reflect padding and are skipped.
        let cfg = StftConfig { window_len: 64, hop_len: 64, fft_len: 64, window: WindowKind::Rectangular };
        let k = 5;
        let x: Vec<f64> = (0..64 * 8).map(|n| (2.0 * PI * k as f64 * n as f64 / 64.0).cos()).collect();
        let spec = stft(&Waveform::new(x, 16000).unwrap(), &cfg).unwrap();
        for t in 1..spec.frames() - 1 {
            let total: f64 = spec.frame(t).iter().map(|z| z.norm_sqr()).sum();
            let in_bin = spec.get(t, k).norm_sqr();
            assert!((in_bin / total - 1.0).abs() < 1e-12, "frame {t}");
            assert!((spec.get(t, k).norm() - 32.0).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_reconstructs_interior() {
        let wave = sine(4000, 0.0371);
        let cfg = StftConfig::default();
        let back = istft(&stft(&wave, &cfg).unwrap(), &cfg, 16000).unwrap();
        assert!(back.len() <= wave.len() && wave.len() - back.len() < cfg.hop_len);
        for (a, b) in back.samples.iter().zip(&wave.samples) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn istft_rejects_mismatched_bins() {
        let spec = Spectrogram::zeros(10, 100);
        assert!(istft(&spec, &StftConfig::default(), 16000).is_err());
    }

    #[test]
    fn compress_examples() {
        let z = C64::from_polar(4.0, PI / 3.0);
        let spec = Spectrogram::from_vec(vec![z], 1, 1).unwrap();
        let out = compress_power(&spec, 0.5).unwrap().get(0, 0);
        assert!((out - C64::from_polar(2.0, PI / 3.0)).norm() < 1e-14);
        assert_eq!(compress_power(&spec, 1.0).unwrap(), spec);
        assert!(compress_power(&spec, 0.0).is_err());
        assert!(compress_power(&spec, -0.5).is_err());
        assert!(compress_power(&spec, 1.5).is_err());
    }

    #[test]
    fn frame_parseval_holds() {
        let cfg = StftConfig::default();
        let wave = sine(3200, 0.013);
        let spec = stft(&wave, &cfg).unwrap();
        let window = cfg.window.coefficients(cfg.window_len);
        let padded = reflect_pad(&wave.samples, cfg.window_len / 2);
        for t in [0, 3, spec.frames() - 1] {
            let time: f64 = (0..cfg.window_len)
                .map(|i| (padded[t * cfg.hop_len + i] * window[i]).powi(2))
                .sum();
            let freq: f64 = spec
                .frame(t)
                .iter()
                .enumerate()
                .map(|(k, z)| if k == 0 || k == cfg.fft_len / 2 { z.norm_sqr() } else { 2.0 * z.norm_sqr() })
                .sum();
            assert!((freq - cfg.fft_len as f64 * time).abs() < 1e-8 * freq.max(1.0));
        }
    }

    #[test]
    fn multichannel_shapes_must_agree() {
        let a = Waveform::zeros(10, 16000);
        let b = Waveform::zeros(11, 16000);
        assert!(MultichannelWaveform::new(vec![a.clone(), b]).is_err());
        let c = Waveform::zeros(10, 8000);
        assert!(MultichannelWaveform::new(vec![a, c]).is_err());
        assert!(MultichannelWaveform::new(vec![]).is_err());
    }
}
