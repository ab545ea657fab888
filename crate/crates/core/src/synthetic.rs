//! Deterministic stand-ins for speech and noise corpora.
//!
//! `speech_like` produces syllable-rate bursts of harmonic, formant-shaped
//! voicing with occasional fricative noise and pauses between them, which
//! gives the sparse time-frequency occupancy real speech has.
//! `noise_like` produces stationary-ish coloured noise with a slow
//! amplitude drift.

use crate::prelude::*;
use crate::signal::Waveform;
use core::f64::consts::PI;
use rand::Rng;

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        for v in x.iter_mut() {
            *v *= peak / m;
        }
    }
}

pub fn speech_like<R: Rng + ?Sized>(len: usize, sample_rate_hz: u32, rng: &mut R) -> Waveform {
    let fs = sample_rate_hz as f64;
    let nyquist = fs / 2.0;
    let mut out = vec![0.0; len];
    let mut pos = (rng.random_range(0.02..0.15) * fs) as usize;
    while pos < len {
        let dur = (rng.random_range(0.12..0.35) * fs) as usize;
        let end = (pos + dur).min(len);
        let n = end - pos;
        if rng.random::<f64>() < 0.2 {
            // Fricative: first-differenced white noise.
            let gain = rng.random_range(0.05..0.2);
            let mut prev = 0.0;
            for i in 0..n {
                let w = gaussian(rng);
                let env = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
                out[pos + i] += gain * env * (w - prev);
                prev = w;
            }
        } else {
            let f0_start = rng.random_range(90.0..220.0);
            let f0_end = f0_start * rng.random_range(0.8..1.2);
            let formants = [
                (rng.random_range(300.0..900.0), rng.random_range(60.0..120.0), 1.0),
                (rng.random_range(900.0..2500.0), rng.random_range(90.0..180.0), 0.6),
                (rng.random_range(2400.0..3600.0), rng.random_range(120.0..250.0), 0.3),
            ];
            let envelope = |f: f64| -> f64 {
                let peaks: f64 = formants.iter().map(|&(fc, bw, a)| a / (1.0 + ((f - fc) / bw).powi(2))).sum();
                (peaks + 0.02) / (1.0 + f / 1500.0)
            };
            let gain = rng.random_range(0.5..1.0);
            let mut phase = rng.random_range(0.0..2.0 * PI);
            let max_harmonics = (0.9 * nyquist / f0_start.min(f0_end)) as usize;
            let amps_at = |f0: f64| -> Vec<f64> {
                (1..=max_harmonics).map(|h| if h as f64 * f0 < 0.9 * nyquist { envelope(h as f64 * f0) } else { 0.0 }).collect()
            };
            let (a_start, a_end) = (amps_at(f0_start), amps_at(f0_end));
            for i in 0..n {
                let frac = i as f64 / n as f64;
                let f0 = f0_start + (f0_end - f0_start) * frac;
                phase += 2.0 * PI * f0 / fs;
                let env = (PI * frac).sin().powf(0.7);
                let mut s = 0.0;
                for h in 0..max_harmonics {
                    let a = a_start[h] + (a_end[h] - a_start[h]) * frac;
                    if a != 0.0 {
                        s += a * ((h + 1) as f64 * phase).sin();
                    }
                }
                out[pos + i] += gain * env * s;
            }
        }
        let gap = if rng.random::<f64>() < 0.15 { rng.random_range(0.25..0.6) } else { rng.random_range(0.03..0.18) };
        pos = end + (gap * fs) as usize;
    }
    normalize_peak(&mut out, 0.5);
    Waveform { samples: out, sample_rate_hz }
}

pub fn noise_like<R: Rng + ?Sized>(len: usize, sample_rate_hz: u32, rng: &mut R) -> Waveform {
    let fs = sample_rate_hz as f64;
    let pole = rng.random_range(0.0..0.97);
    let tilt = rng.random_range(0.0..1.0);
    let am_rate = rng.random_range(0.3..3.0);
    let am_depth = rng.random_range(0.0..0.5);
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let mut lp = 0.0;
    let mut out: Vec<f64> = (0..len)
        .map(|i| {
            let w = gaussian(rng);
            lp = pole * lp + (1.0 - pole) * w;
            let colored = (1.0 - tilt) * w + tilt * lp * 3.0;
            let am = 1.0 + am_depth * (2.0 * PI * am_rate * i as f64 / fs + am_phase).sin();
            colored * am
        })
        .collect();
    normalize_peak(&mut out, 0.5);
    Waveform { samples: out, sample_rate_hz }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sources_are_deterministic_and_bounded() {
        let a = speech_like(16000, 16000, &mut ChaCha8Rng::seed_from_u64(3));
        let b = speech_like(16000, 16000, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!((a.peak() - 0.5).abs() < 1e-12);
        let n = noise_like(16000, 16000, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(n.samples.iter().all(|x| x.is_finite()));
        assert!(n.energy() > 0.0);
    }

    #[test]
    fn speech_has_pauses() {
        let s = speech_like(3 * 16000, 16000, &mut ChaCha8Rng::seed_from_u64(11));
        let silent = s.samples.chunks(160).filter(|c| c.iter().all(|x| x.abs() < 1e-6)).count();
        assert!(silent > 5, "only {silent} silent 10 ms blocks");
    }
}
