//! Objective metrics against a time-aligned reference.

use crate::prelude::*;
use crate::signal::Waveform;
use crate::{Error, Result};

/// Upper bound reported by [`si_sdr`]; the same magnitude bounds it below.
pub const SI_SDR_CAP_DB: f64 = 100.0;
pub const SEG_SNR_MIN_DB: f64 = -10.0;
pub const SEG_SNR_MAX_DB: f64 = 35.0;
/// Frames quieter than this (relative to the loudest reference frame) are
/// skipped by [`segmental_snr`].
pub const SEG_SNR_ACTIVITY_DB: f64 = -40.0;

fn check_pair(est: &Waveform, reference: &Waveform) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::invalid(format!(
            "estimate has {} samples, reference has {}",
            est.len(),
            reference.len()
        )));
    }
    if !(reference.energy() > 0.0) {
        return Err(Error::invalid("reference has zero energy"));
    }
    Ok(())
}

/// Scale-invariant SDR in dB, clamped to `[-100, 100]`.
pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    check_pair(est, reference)?;
    let ref_energy = reference.energy();
    let dot: f64 = est.samples.iter().zip(&reference.samples).map(|(e, r)| e * r).sum();
    let a = dot / ref_energy;
    let (mut target, mut noise) = (0.0, 0.0);
    for (e, r) in est.samples.iter().zip(&reference.samples) {
        let s = a * r;
        target += s * s;
        noise += (s - e) * (s - e);
    }
    if noise == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * libm::log10(target / noise)).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Mean per-frame SNR `10 log10(|ref|^2 / |ref - est|^2)` over
/// non-overlapping frames of `frame_ms`, each clamped to `[-10, 35]` dB.
/// Only frames within 40 dB of the loudest reference frame count.
pub fn segmental_snr(est: &Waveform, reference: &Waveform, frame_ms: f64) -> Result<f64> {
    check_pair(est, reference)?;
    let frame = libm::round(frame_ms * 1e-3 * reference.sample_rate_hz as f64) as usize;
    if frame == 0 {
        return Err(Error::invalid("frame length rounds to zero samples"));
    }
    let stats: Vec<(f64, f64)> = reference
        .samples
        .chunks(frame)
        .zip(est.samples.chunks(frame))
        .map(|(r, e)| {
            let sig: f64 = r.iter().map(|x| x * x).sum();
            let err: f64 = r.iter().zip(e).map(|(x, y)| (x - y) * (x - y)).sum();
            (sig, err)
        })
        .collect();
    let loudest = stats.iter().fold(0.0f64, |m, s| m.max(s.0));
    let threshold = loudest * libm::pow(10.0, SEG_SNR_ACTIVITY_DB / 10.0);
    let per_frame: Vec<f64> = stats
        .iter()
        .filter(|(sig, _)| *sig > 0.0 && *sig >= threshold)
        .map(|&(sig, err)| {
            if err == 0.0 {
                SEG_SNR_MAX_DB
            } else {
                (10.0 * libm::log10(sig / err)).clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB)
            }
        })
        .collect();
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 16000).unwrap()
    }

    fn chirp(len: usize) -> Vec<f64> {
        (0..len).map(|n| (0.001 * (n * n) as f64).sin() + 0.3 * (0.05 * n as f64).cos()).collect()
    }

    #[test]
    fn identical_and_scaled_hit_the_cap() {
        let r = wave(chirp(4000));
        assert_eq!(si_sdr(&r, &r).unwrap(), SI_SDR_CAP_DB);
        assert_eq!(si_sdr(&r.scaled(2.0), &r).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn orthogonal_noise_at_one_percent_gives_20_db() {
        let r = chirp(4000);
        // Gram-Schmidt a second signal against the reference, then scale it
        // to a hundredth of the reference energy.
        let raw: Vec<f64> = (0..4000).map(|n| ((n * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let rr: f64 = r.iter().map(|x| x * x).sum();
        let proj = raw.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
        let orth: Vec<f64> = raw.iter().zip(&r).map(|(a, b)| a - proj * b).collect();
        let oo: f64 = orth.iter().map(|x| x * x).sum();
        let k = (rr / 100.0 / oo).sqrt();
        let est: Vec<f64> = r.iter().zip(&orth).map(|(a, b)| a + k * b).collect();
        let got = si_sdr(&wave(est), &wave(r)).unwrap();
        assert!((got - 20.0).abs() < 1e-9, "{got}");
    }

    #[test]
    fn zero_reference_is_rejected() {
        let z = wave(vec![0.0; 100]);
        assert!(si_sdr(&z, &z).is_err());
        assert!(segmental_snr(&z, &z, 20.0).is_err());
        assert!(si_sdr(&wave(vec![1.0; 10]), &wave(vec![1.0; 11])).is_err());
    }

    #[test]
    fn segmental_snr_clamps() {
        let r = wave(chirp(3200));
        assert_eq!(segmental_snr(&r, &r, 20.0).unwrap(), SEG_SNR_MAX_DB);
        // Error amplitude ten times the signal: -20 dB before clamping.
        let bad = r.scaled(-9.0);
        assert_eq!(segmental_snr(&bad, &r, 20.0).unwrap(), SEG_SNR_MIN_DB);
    }

    #[test]
    fn segmental_snr_of_a_silent_estimate_is_zero_db() {
        let r = wave(chirp(3200));
        let silent = wave(vec![0.0; 3200]);
        assert!(segmental_snr(&silent, &r, 20.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_frame_hand_value() {
        // ref = [1, 2, 2] (energy 9), est = [1, 2, 1] (error energy 1).
        let r = wave(vec![1.0, 2.0, 2.0]);
        let e = wave(vec![1.0, 2.0, 1.0]);
        let frame_ms = 3.0 / 16.0;
        let got = segmental_snr(&e, &r, frame_ms).unwrap();
        assert!((got - 10.0 * 9f64.log10()).abs() < 1e-12);
    }
}
