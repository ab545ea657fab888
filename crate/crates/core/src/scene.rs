//! Spatialized scene synthesis.
//!
//! A scene places a target talker and one point noise source around a ULA
//! in a random shoebox room, convolves both with image-method RIRs, splits
//! the target into its direct-path image and reverberant tail, and mixes
//! the noise at a drawn SNR:
//!
//! `X = S_image + V + N`, with `S_image[0]` the anechoic training target.

use crate::prelude::*;
use crate::room::{self, AbsorptionModel, ArrayGeometry, Point3, Rir, RoomSpec, DEFAULT_SPEED_OF_SOUND};
use crate::signal::{convolve, MultichannelWaveform, Waveform};
use crate::{Error, Result};
use core::f64::consts::LN_10;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Peak level mixtures are normalized to when they would clip.
pub const CLIP_PEAK: f64 = 0.99;
const MAX_PLACEMENT_ATTEMPTS: usize = 2000;

/// DOA-difference classes used to bin evaluation results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DoaBin {
    #[serde(rename = "0-15")]
    Deg0To15,
    #[serde(rename = "15-45")]
    Deg15To45,
    #[serde(rename = "45-90")]
    Deg45To90,
    #[serde(rename = "90-180")]
    Deg90To180,
}

impl DoaBin {
    pub const ALL: [DoaBin; 4] = [DoaBin::Deg0To15, DoaBin::Deg15To45, DoaBin::Deg45To90, DoaBin::Deg90To180];

    /// Bin of an absolute DOA difference in degrees; lower edges inclusive.
    pub fn from_difference(deg: f64) -> DoaBin {
        let d = deg.abs();
        if d < 15.0 {
            DoaBin::Deg0To15
        } else if d < 45.0 {
            DoaBin::Deg15To45
        } else if d < 90.0 {
            DoaBin::Deg45To90
        } else {
            DoaBin::Deg90To180
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DoaBin::Deg0To15 => "0-15",
            DoaBin::Deg15To45 => "15-45",
            DoaBin::Deg45To90 => "45-90",
            DoaBin::Deg90To180 => "90-180",
        }
    }

    pub fn from_label(label: &str) -> Option<DoaBin> {
        DoaBin::ALL.into_iter().find(|b| b.label() == label)
    }

    pub fn range_deg(self) -> (f64, f64) {
        match self {
            DoaBin::Deg0To15 => (0.0, 15.0),
            DoaBin::Deg15To45 => (15.0, 45.0),
            DoaBin::Deg45To90 => (45.0, 90.0),
            DoaBin::Deg90To180 => (90.0, 180.0),
        }
    }
}

/// Ranges and seed that fully determine one random scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub dims_min: Point3,
    pub dims_max: Point3,
    pub t60_range: [f64; 2],
    pub distance_range: [f64; 2],
    pub distance_step: f64,
    pub min_doa_separation_deg: f64,
    pub snr_range_db: [f64; 2],
    pub num_mics: usize,
    pub mic_spacing: f64,
    /// Minimum clearance between any source or microphone and the walls.
    pub wall_margin: f64,
    pub array_height_range: [f64; 2],
    /// Constrain the target/noise DOA difference to one bin.
    pub doa_bin: Option<DoaBin>,
    pub absorption: AbsorptionModel,
    pub sample_rate_hz: u32,
    pub speed_of_sound: f64,
    /// Length of direct-path image kept after the earliest RIR peak.
    pub split_ms: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            dims_min: [5.0, 5.0, 3.0],
            dims_max: [10.0, 10.0, 4.0],
            t60_range: [0.1, 0.7],
            distance_range: [0.5, 5.0],
            distance_step: 0.5,
            min_doa_separation_deg: 5.0,
            snr_range_db: [-6.0, 6.0],
            num_mics: 6,
            mic_spacing: 0.05,
            wall_margin: 0.2,
            array_height_range: [1.0, 2.0],
            doa_bin: None,
            absorption: AbsorptionModel::Calibrated,
            sample_rate_hz: 16000,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            split_ms: room::DIRECT_PATH_WINDOW_MS,
            seed: 0,
        }
    }
}

fn ordered(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
        return Err(Error::invalid(format!("{name} must be an ordered finite range, got {r:?}")));
    }
    Ok(())
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            ordered("dims", [self.dims_min[k], self.dims_max[k]])?;
            if !(self.dims_min[k] > 0.0) {
                return Err(Error::invalid("dims_min must be positive"));
            }
        }
        ordered("t60_range", self.t60_range)?;
        ordered("distance_range", self.distance_range)?;
        ordered("snr_range_db", self.snr_range_db)?;
        ordered("array_height_range", self.array_height_range)?;
        if !(self.t60_range[0] > 0.0) {
            return Err(Error::invalid("t60_range must be positive"));
        }
        if !(self.distance_range[0] > 0.0) || !(self.distance_step > 0.0) {
            return Err(Error::invalid("distances and distance_step must be positive"));
        }
        if !(0.0..180.0).contains(&self.min_doa_separation_deg) {
            return Err(Error::invalid("min_doa_separation_deg must lie in [0, 180)"));
        }
        if self.num_mics == 0 || !(self.mic_spacing > 0.0) {
            return Err(Error::invalid("the array needs microphones and a positive spacing"));
        }
        if self.sample_rate_hz == 0 || !(self.speed_of_sound > 0.0) || !(self.split_ms >= 0.0) {
            return Err(Error::invalid("sample_rate_hz, speed_of_sound and split_ms must be positive"));
        }
        if let Some(bin) = self.doa_bin {
            if bin.range_deg().1 <= self.min_doa_separation_deg {
                return Err(Error::invalid(format!(
                    "DOA bin {} cannot satisfy a {} degree minimum separation",
                    bin.label(),
                    self.min_doa_separation_deg
                )));
            }
        }
        Ok(())
    }

    /// Distances on the step grid inside `distance_range`.
    pub fn distance_grid(&self) -> Vec<f64> {
        let [lo, hi] = self.distance_range;
        let n = libm::floor((hi - lo) / self.distance_step + 1e-9) as usize;
        (0..=n).map(|k| lo + k as f64 * self.distance_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlacement {
    pub target_room: RoomSpec,
    pub noise_room: RoomSpec,
    pub target_doa_deg: f64,
    pub noise_doa_deg: f64,
    pub target_distance_m: f64,
    pub noise_distance_m: f64,
    pub snr_db: f64,
    pub seed: u64,
}

impl ScenePlacement {
    pub fn doa_difference_deg(&self) -> f64 {
        (self.target_doa_deg - self.noise_doa_deg).abs()
    }

    pub fn doa_bin(&self) -> DoaBin {
        DoaBin::from_difference(self.doa_difference_deg())
    }
}

fn point_at(center: Point3, doa_deg: f64, distance: f64) -> Point3 {
    let th = doa_deg.to_radians();
    [center[0] + distance * libm::cos(th), center[1] + distance * libm::sin(th), center[2]]
}

fn clear_of_walls(p: &Point3, dims: &Point3, margin: f64) -> bool {
    p.iter().zip(dims).all(|(x, d)| *x >= margin && *x <= d - margin)
}

/// Draw room, T60, SNR, array placement and the two source positions.
///
/// All draws come from one ChaCha8 stream seeded with `spec.seed`, in a
/// fixed order, so a spec always maps to the same scene.
pub fn draw_scene(spec: &SceneSpec) -> Result<ScenePlacement> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };

    let dims = [
        uniform(&mut rng, spec.dims_min[0], spec.dims_max[0]),
        uniform(&mut rng, spec.dims_min[1], spec.dims_max[1]),
        uniform(&mut rng, spec.dims_min[2], spec.dims_max[2]),
    ];
    let mut t60_lo = spec.t60_range[0];
    if spec.absorption == AbsorptionModel::Sabine {
        // Sabine cannot realize absorption above 1; clamp the draw to what
        // this room supports.
        let v = dims[0] * dims[1] * dims[2];
        let s = 2.0 * (dims[0] * dims[1] + dims[0] * dims[2] + dims[1] * dims[2]);
        let shortest = 24.0 * LN_10 * v / (spec.speed_of_sound * s) * (1.0 + 1e-9);
        if shortest > spec.t60_range[1] {
            return Err(Error::GenerationFailed(format!(
                "a {dims:?} m room cannot reach T60 {} s under Sabine absorption",
                spec.t60_range[1]
            )));
        }
        t60_lo = t60_lo.max(shortest);
    }
    let t60 = uniform(&mut rng, t60_lo, spec.t60_range[1]);
    let snr_db = uniform(&mut rng, spec.snr_range_db[0], spec.snr_range_db[1]);
    let grid = spec.distance_grid();
    let half_aperture = (spec.num_mics as f64 - 1.0) / 2.0 * spec.mic_spacing;
    let margin = spec.wall_margin;

    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let cx = uniform(&mut rng, margin + half_aperture, dims[0] - margin - half_aperture);
        let cy = uniform(&mut rng, margin, dims[1] - margin);
        let z_hi = spec.array_height_range[1].min(dims[2] - margin);
        let cz = uniform(&mut rng, spec.array_height_range[0].min(z_hi), z_hi);
        let center = [cx, cy, cz];

        let target_doa = uniform(&mut rng, 0.0, 180.0);
        let target_distance = grid[rng.random_range(0..grid.len())];
        let noise_doa = match spec.doa_bin {
            Some(bin) => {
                let (lo, hi) = bin.range_deg();
                let diff = uniform(&mut rng, lo.max(spec.min_doa_separation_deg), hi);
                if rng.random::<bool>() { target_doa + diff } else { target_doa - diff }
            }
            None => uniform(&mut rng, 0.0, 180.0),
        };
        let noise_distance = grid[rng.random_range(0..grid.len())];

        let diff = (noise_doa - target_doa).abs();
        if !(0.0..=180.0).contains(&noise_doa) || diff < spec.min_doa_separation_deg {
            continue;
        }
        if let Some(bin) = spec.doa_bin {
            if DoaBin::from_difference(diff) != bin {
                continue;
            }
        }
        let target_pos = point_at(center, target_doa, target_distance);
        let noise_pos = point_at(center, noise_doa, noise_distance);
        let array = ArrayGeometry::uniform_linear(spec.num_mics, spec.mic_spacing, center)?;
        let placed = clear_of_walls(&target_pos, &dims, margin)
            && clear_of_walls(&noise_pos, &dims, margin)
            && array.mic_positions.iter().all(|p| clear_of_walls(p, &dims, margin));
        if !placed {
            continue;
        }
        let room_for = |source_pos| RoomSpec {
            absorption: spec.absorption,
            speed_of_sound: spec.speed_of_sound,
            ..RoomSpec::new(dims, t60, source_pos, array.clone(), spec.sample_rate_hz)
        };
        return Ok(ScenePlacement {
            target_room: room_for(target_pos),
            noise_room: room_for(noise_pos),
            target_doa_deg: target_doa,
            noise_doa_deg: noise_doa,
            target_distance_m: target_distance,
            noise_distance_m: noise_distance,
            snr_db,
            seed: spec.seed,
        });
    }
    Err(Error::GenerationFailed(format!(
        "no valid placement in a {dims:?} m room after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )))
}

/// A source convolved with an RIR and split at the direct path.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatializedSource {
    pub direct: MultichannelWaveform,
    pub tail: MultichannelWaveform,
}

impl SpatializedSource {
    pub fn full(&self) -> MultichannelWaveform {
        self.direct.add(&self.tail).expect("direct and tail share a shape")
    }
}

/// Convolve `dry` with each RIR channel, split `split_ms` after that
/// channel's earliest peak. Outputs keep the dry signal's length.
pub fn spatialize(dry: &Waveform, rir: &Rir, split_ms: f64) -> Result<SpatializedSource> {
    if dry.sample_rate_hz != rir.sample_rate_hz {
        return Err(Error::invalid(format!(
            "dry signal is {} Hz but the RIR is {} Hz",
            dry.sample_rate_hz, rir.sample_rate_hz
        )));
    }
    if rir.channels.is_empty() || dry.is_empty() {
        return Err(Error::invalid("spatialization needs a non-empty signal and RIR"));
    }
    let fs = dry.sample_rate_hz;
    let split = libm::round(split_ms * 1e-3 * fs as f64) as usize;
    let search = libm::round(room::DIRECT_PATH_WINDOW_MS * 1e-3 * fs as f64) as usize;
    let len = dry.len();
    let mut direct = Vec::with_capacity(rir.num_channels());
    let mut tail = Vec::with_capacity(rir.num_channels());
    for (m, h) in rir.channels.iter().enumerate() {
        let peak = room::direct_peak_index(h, search)
            .ok_or_else(|| Error::invalid(format!("RIR channel {m} is silent")))?;
        let cut = (peak + split + 1).min(h.len());
        let mut d = convolve(&dry.samples, &h[..cut]);
        d.resize(len, 0.0);
        let mut t = vec![0.0; len];
        if cut < h.len() {
            let conv = convolve(&dry.samples, &h[cut..]);
            for (i, v) in conv.into_iter().enumerate() {
                if i + cut >= len {
                    break;
                }
                t[i + cut] = v;
            }
        }
        direct.push(Waveform { samples: d, sample_rate_hz: fs });
        tail.push(Waveform { samples: t, sample_rate_hz: fs });
    }
    Ok(SpatializedSource { direct: MultichannelWaveform::new(direct)?, tail: MultichannelWaveform::new(tail)? })
}

/// Convolve a source with the full RIR, truncated to the dry length.
pub fn reverberate(dry: &Waveform, rir: &Rir) -> Result<MultichannelWaveform> {
    if dry.sample_rate_hz != rir.sample_rate_hz {
        return Err(Error::invalid("dry signal and RIR sample rates differ"));
    }
    let channels = rir
        .channels
        .iter()
        .map(|h| {
            let mut y = convolve(&dry.samples, h);
            y.resize(dry.len(), 0.0);
            Waveform { samples: y, sample_rate_hz: dry.sample_rate_hz }
        })
        .collect();
    MultichannelWaveform::new(channels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub target_doa_deg: f64,
    pub noise_doa_deg: f64,
    pub doa_difference_deg: f64,
    pub doa_bin: DoaBin,
    pub t60: f64,
    pub room_dims: Point3,
    pub target_pos: Point3,
    pub noise_pos: Point3,
    pub target_distance_m: f64,
    pub noise_distance_m: f64,
    pub array: ArrayGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub snr_db: f64,
    /// Gain the noise image was scaled by to reach `snr_db`.
    pub noise_gain: f64,
    /// Global gain applied to every component to keep the mixture peak at
    /// most 0.99 (1 when no scaling was needed).
    pub normalization_gain: f64,
    pub seed: Option<u64>,
    pub geometry: Option<SceneGeometry>,
}

/// One synthesized training/evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePair {
    pub mixture: MultichannelWaveform,
    /// Direct-path image at the reference microphone.
    pub anechoic_target: Waveform,
    pub direct_speech_image: MultichannelWaveform,
    pub reverberant_speech_tail: MultichannelWaveform,
    pub reverberant_noise: MultichannelWaveform,
    pub meta: SceneMeta,
}

impl MixturePair {
    /// Reverberant tail plus noise, `R = V + N`.
    pub fn interference(&self) -> MultichannelWaveform {
        self.reverberant_speech_tail.add(&self.reverberant_noise).expect("components share a shape")
    }

    /// SNR at the reference microphone between the full reverberant speech
    /// and the noise image.
    pub fn measured_snr_db(&self) -> f64 {
        let speech = self.direct_speech_image.reference().samples.iter().zip(&self.reverberant_speech_tail.reference().samples);
        let ps: f64 = speech.map(|(a, b)| (a + b) * (a + b)).sum();
        let pn = self.reverberant_noise.reference().energy();
        10.0 * libm::log10(ps / pn)
    }

    /// Largest deviation from `X = S_image + V + N`, relative to the
    /// mixture peak.
    pub fn additivity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in 0..self.mixture.num_channels() {
            let x = &self.mixture.channel(m).samples;
            let s = &self.direct_speech_image.channel(m).samples;
            let v = &self.reverberant_speech_tail.channel(m).samples;
            let n = &self.reverberant_noise.channel(m).samples;
            for i in 0..x.len() {
                worst = worst.max((x[i] - (s[i] + v[i] + n[i])).abs());
            }
        }
        worst / self.mixture.peak().max(f64::MIN_POSITIVE)
    }
}

/// Scale the noise so the reference-channel SNR equals `snr_db`, sum the
/// components and apply the clipping guard.
pub fn mix_at_snr(speech: &SpatializedSource, noise_rev: &MultichannelWaveform, snr_db: f64) -> Result<MixturePair> {
    let speech_rev = speech.full();
    if speech_rev.num_channels() != noise_rev.num_channels() || speech_rev.len() != noise_rev.len() {
        return Err(Error::invalid("speech and noise images differ in shape"));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db must be finite"));
    }
    let ps = speech_rev.reference().power();
    let pn = noise_rev.reference().power();
    if !(ps > 0.0) || !(pn > 0.0) {
        return Err(Error::invalid("speech and noise must both have energy at the reference microphone"));
    }
    let noise_gain = (ps / (pn * libm::pow(10.0, snr_db / 10.0))).sqrt();
    let noise = noise_rev.scaled(noise_gain);
    let mixture = speech_rev.add(&noise)?;
    let peak = mixture.peak();
    let g = if peak > CLIP_PEAK { CLIP_PEAK / peak } else { 1.0 };
    let direct = speech.direct.scaled(g);
    Ok(MixturePair {
        mixture: mixture.scaled(g),
        anechoic_target: direct.reference().clone(),
        direct_speech_image: direct,
        reverberant_speech_tail: speech.tail.scaled(g),
        reverberant_noise: noise.scaled(g),
        meta: SceneMeta { snr_db, noise_gain, normalization_gain: g, seed: None, geometry: None },
    })
}

/// Simulate both RIRs of a placement, spatialize the sources and mix.
pub fn synthesize_scene(placement: &ScenePlacement, speech: &Waveform, noise: &Waveform, split_ms: f64) -> Result<MixturePair> {
    if speech.len() != noise.len() {
        return Err(Error::invalid(format!(
            "speech has {} samples, noise has {}",
            speech.len(),
            noise.len()
        )));
    }
    let target_rir = room::simulate_rir(&placement.target_room)?;
    let noise_rir = room::simulate_rir(&placement.noise_room)?;
    let spatial = spatialize(speech, &target_rir, split_ms)?;
    let noise_rev = reverberate(noise, &noise_rir)?;
    let mut pair = mix_at_snr(&spatial, &noise_rev, placement.snr_db)?;
    let room = &placement.target_room;
    pair.meta.seed = Some(placement.seed);
    pair.meta.geometry = Some(SceneGeometry {
        target_doa_deg: placement.target_doa_deg,
        noise_doa_deg: placement.noise_doa_deg,
        doa_difference_deg: placement.doa_difference_deg(),
        doa_bin: placement.doa_bin(),
        t60: room.t60,
        room_dims: room.dims,
        target_pos: room.source_pos,
        noise_pos: placement.noise_room.source_pos,
        target_distance_m: placement.target_distance_m,
        noise_distance_m: placement.noise_distance_m,
        array: room.array.clone(),
    });
    Ok(pair)
}

/// Draw a scene and fill it with the built-in synthetic sources, seeded
/// from the same spec seed.
pub fn synthesize_synthetic_scene(spec: &SceneSpec, len: usize) -> Result<MixturePair> {
    let placement = draw_scene(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_5eed_5eed_5eed);
    let speech = crate::synthetic::speech_like(len, spec.sample_rate_hz, &mut rng);
    let noise = crate::synthetic::noise_like(len, spec.sample_rate_hz, &mut rng);
    synthesize_scene(&placement, &speech, &noise, spec.split_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doa_bins() {
        assert_eq!(DoaBin::from_difference(30.0).label(), "15-45");
        assert_eq!(DoaBin::from_difference(5.0), DoaBin::Deg0To15);
        assert_eq!(DoaBin::from_difference(15.0), DoaBin::Deg15To45);
        assert_eq!(DoaBin::from_difference(180.0), DoaBin::Deg90To180);
        assert_eq!(DoaBin::from_label("45-90"), Some(DoaBin::Deg45To90));
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec { seed: 42, ..SceneSpec::default() };
        assert_eq!(draw_scene(&spec).unwrap(), draw_scene(&spec).unwrap());
        let other = SceneSpec { seed: 43, ..SceneSpec::default() };
        assert_ne!(draw_scene(&spec).unwrap(), draw_scene(&other).unwrap());
    }

    #[test]
    fn draws_respect_grid_and_separation() {
        for seed in 0..1000 {
            let p = draw_scene(&SceneSpec { seed, ..SceneSpec::default() }).unwrap();
            assert!(p.doa_difference_deg() >= 5.0);
            for d in [p.target_distance_m, p.noise_distance_m] {
                let k = (d - 0.5) / 0.5;
                assert!((k - k.round()).abs() < 1e-9 && (0.5..=5.0).contains(&d));
            }
            assert!((0.1..=0.7).contains(&p.target_room.t60));
            assert!((-6.0..=6.0).contains(&p.snr_db));
        }
    }

    #[test]
    fn tiny_room_fails_to_place() {
        let spec = SceneSpec {
            dims_min: [1.0, 1.0, 2.5],
            dims_max: [1.0, 1.0, 2.5],
            distance_range: [3.0, 5.0],
            ..SceneSpec::default()
        };
        assert!(matches!(draw_scene(&spec), Err(Error::GenerationFailed(_))));
    }

    #[test]
    fn doa_bin_constraint_is_honoured() {
        for bin in DoaBin::ALL {
            for seed in 0..50 {
                let p = draw_scene(&SceneSpec { seed, doa_bin: Some(bin), ..SceneSpec::default() }).unwrap();
                assert_eq!(p.doa_bin(), bin);
            }
        }
    }

    fn impulse(delay: usize, gain: f64, len: usize) -> Vec<f64> {
        let mut h = vec![0.0; len];
        h[delay] = gain;
        h
    }

    #[test]
    fn single_impulse_rir_has_no_tail() {
        let dry = Waveform::new((0..500).map(|n| (n as f64 * 0.1).sin()).collect(), 16000).unwrap();
        let rir = Rir { channels: vec![impulse(7, 0.5, 100), impulse(9, 0.25, 100)], sample_rate_hz: 16000, direct_path_delays: vec![7, 9] };
        let out = spatialize(&dry, &rir, 2.5).unwrap();
        assert!(out.tail.channels().iter().all(|c| c.samples.iter().all(|&x| x == 0.0)));
        for (i, v) in out.direct.channel(0).samples.iter().enumerate() {
            let want = if i >= 7 { 0.5 * dry.samples[i - 7] } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_rate_mismatch_is_rejected() {
        let dry = Waveform::zeros(100, 8000);
        let rir = Rir { channels: vec![impulse(1, 1.0, 10)], sample_rate_hz: 16000, direct_path_delays: vec![1] };
        assert!(spatialize(&dry, &rir, 2.5).is_err());
    }

    #[test]
    fn mix_hits_requested_snr() {
        let fs = 16000;
        let s = Waveform::new((0..4000).map(|n| (n as f64 * 0.05).sin() * 0.3).collect(), fs).unwrap();
        let n = Waveform::new((0..4000).map(|n| ((n * 7919 % 101) as f64 / 101.0 - 0.5) * 0.2).collect(), fs).unwrap();
        let speech = SpatializedSource {
            direct: MultichannelWaveform::new(vec![s.clone(), s.scaled(0.9)]).unwrap(),
            tail: MultichannelWaveform::zeros(2, 4000, fs),
        };
        let noise = MultichannelWaveform::new(vec![n.clone(), n.scaled(1.1)]).unwrap();
        for snr in [0.0, 6.0, -6.0] {
            let pair = mix_at_snr(&speech, &noise, snr).unwrap();
            let ratio = pair.direct_speech_image.reference().power() / pair.reverberant_noise.reference().power();
            assert!((ratio / libm::pow(10.0, snr / 10.0) - 1.0).abs() < 1e-10);
            assert!(pair.additivity_error() < 1e-12);
            assert!(pair.mixture.peak() <= CLIP_PEAK + 1e-12);
        }
        let silent = MultichannelWaveform::zeros(2, 4000, fs);
        assert!(mix_at_snr(&speech, &silent, 0.0).is_err());
    }
}
