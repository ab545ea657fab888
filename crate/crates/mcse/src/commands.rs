//! Subcommand bodies. Each takes a resolved, validated config, writes its
//! artifacts under the configured output directory (including the config
//! itself), and is deterministic given that config.

use std::path::{Path, PathBuf};

use mcse_core::beamforming::{mvdr_weights, beampattern, BeamformerWeights, BeampatternGrid, Rtf, SpatialCovariance};
use mcse_core::oracle::{self, RtfMethod, SceneSpectra};
use mcse_core::room::{self, steering_vector, ArrayGeometry};
use mcse_core::scene::{self, SceneSpec};
use mcse_core::signal::Waveform;
use mcse_core::synthetic;
use mcse_core::taylor::{multiobjective_loss_with, ExternalOperator};
use mcse_core::C64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    scene_seed, BeamformConfig, BeampatternConfig, EvaluateConfig, PatternWeights, SimulateRirConfig,
    SynthDatasetConfig, RESOLVED_CONFIG_FILE,
};
use crate::dump::{self, DumpInfo};
use crate::error::{CoreContext, Error, Result};
use crate::evaluate::{self, EstimateSource, EvalReport};
use crate::manifest::{self, Manifest, SceneRecord};
use crate::rir::export_rir;
use crate::wav::{self, Encoding};
use crate::json;

const SOURCE_STREAM: u64 = 0x5eed_5eed_5eed_5eed;

fn write_resolved<T: Serialize>(dir: &Path, cfg: &T) -> Result<()> {
    json::write(&dir.join(RESOLVED_CONFIG_FILE), cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Simulate RIRs and return the written WAV paths.
pub fn simulate_rir(cfg: &SimulateRirConfig) -> Result<Vec<PathBuf>> {
    create_dir(&cfg.output_dir)?;
    let paths = if let Some(room) = cfg.explicit_room()? {
        let rir = room::simulate_rir(&room).context(|| "simulate_rir".to_string())?;
        let path = cfg.output_dir.join("rir.wav");
        export_rir(&path, &rir, &room)?;
        vec![path]
    } else {
        let per_scene = (0..cfg.count)
            .into_par_iter()
            .map(|i| {
                let spec = SceneSpec { seed: scene_seed(cfg.scene.seed, i), ..cfg.scene.clone() };
                let placement = scene::draw_scene(&spec).context(|| format!("scene {i}"))?;
                let mut out = Vec::new();
                for (role, mut room) in [("target", placement.target_room), ("noise", placement.noise_room)] {
                    cfg.apply(&mut room);
                    let rir = room::simulate_rir(&room).context(|| format!("scene {i} {role} RIR"))?;
                    let path = cfg.output_dir.join(format!("scene_{i:04}_{role}.wav"));
                    export_rir(&path, &rir, &room)?;
                    out.push(path);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        per_scene.into_iter().flatten().collect()
    };
    write_resolved(&cfg.output_dir, cfg)?;
    Ok(paths)
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(&path, e.into())
        })?;
        let is_wav = entry.path().extension().is_some_and(|x| x.eq_ignore_ascii_case("wav"));
        if entry.file_type().is_file() && is_wav {
            files.push(entry.into_path());
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::usage(format!("{}: no WAV files found", dir.display())));
    }
    Ok(files)
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

/// Loop `noise` from `offset` until it is `len` samples long.
fn loop_to_length(noise: &Waveform, len: usize, offset: usize) -> Waveform {
    let n = noise.len();
    Waveform { samples: (0..len).map(|i| noise.samples[(offset + i) % n]).collect(), sample_rate_hz: noise.sample_rate_hz }
}

/// Synthesize the dataset and write its manifest last.
pub fn synth_dataset(cfg: &SynthDatasetConfig) -> Result<Manifest> {
    create_dir(&cfg.output_dir)?;
    let fs = cfg.scene.sample_rate_hz;
    let speech_files = cfg.speech_dir.as_deref().map(list_wavs).transpose()?;
    let noise_files = cfg.noise_dir.as_deref().map(list_wavs).transpose()?;
    let len = (cfg.duration_s * fs as f64).round() as usize;
    let schedule = cfg.bin_schedule();
    let entries = schedule
        .par_iter()
        .enumerate()
        .map(|(i, bin)| {
            let id = format!("{}_{i:04}", cfg.id_prefix);
            let spec = SceneSpec { seed: scene_seed(cfg.scene.seed, i), doa_bin: *bin, ..cfg.scene.clone() };
            let placement = scene::draw_scene(&spec).context(|| format!("{id}: draw_scene"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ SOURCE_STREAM);
            let (speech, speech_source) = match (&speech_files, &cfg.speech_dir) {
                (Some(files), Some(dir)) => {
                    let path = &files[rng.random_range(0..files.len())];
                    let mut w = wav::read_mono(path, Some(fs))?;
                    w.samples.truncate(len);
                    (w, Some(relative(path, dir)))
                }
                _ => (synthetic::speech_like(len, fs, &mut rng), None),
            };
            let (noise, noise_source) = match (&noise_files, &cfg.noise_dir) {
                (Some(files), Some(dir)) => {
                    let path = &files[rng.random_range(0..files.len())];
                    let w = wav::read_mono(path, Some(fs))?;
                    if w.is_empty() {
                        return Err(Error::format(path, "noise file is empty"));
                    }
                    let offset = rng.random_range(0..w.len());
                    (loop_to_length(&w, speech.len(), offset), Some(relative(path, dir)))
                }
                _ => (synthetic::noise_like(speech.len(), fs, &mut rng), None),
            };
            let pair = scene::synthesize_scene(&placement, &speech, &noise, spec.split_ms)
                .context(|| format!("{id}: synthesize_scene"))?;
            let record = SceneRecord {
                id,
                pair,
                target_room: Some(placement.target_room),
                noise_room: Some(placement.noise_room),
                speech_source,
                noise_source,
            };
            manifest::write_scene(&record, &cfg.output_dir)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(entries, &cfg.output_dir);
    manifest.write()?;
    write_resolved(&cfg.output_dir, cfg)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformRecord {
    pub id: String,
    pub output: String,
    /// Bins whose speech covariance was not clearly rank-1.
    pub unreliable_bins: Vec<usize>,
    /// Multi-objective loss against the anechoic target (taylor mode).
    pub loss: Option<f64>,
}

/// Enhance every manifest entry into `<output_dir>/<id>.wav`.
pub fn beamform(cfg: &BeamformConfig) -> Result<Vec<BeamformRecord>> {
    let manifest = Manifest::load(&cfg.manifest)?;
    let external: Option<ExternalOperator> = cfg.external_operator.as_deref().map(json::read).transpose()?;
    let oracle_cfg = cfg.oracle(external);
    create_dir(&cfg.output_dir)?;
    let config_value = serde_json::to_value(cfg).expect("config serializes");
    let records = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let pair = manifest.load_pair(entry)?;
            let rir = match cfg.rtf {
                RtfMethod::DirectPath => {
                    let room = entry.target_room.as_ref().ok_or_else(|| {
                        Error::usage(format!("{}: rtf `direct-path` needs target_room in the manifest", entry.id))
                    })?;
                    Some(room::simulate_rir(room).context(|| format!("{}: target RIR", entry.id))?)
                }
                RtfMethod::Eigenvector => None,
            };
            let spectra = SceneSpectra::new(&pair, &oracle_cfg.stft).context(|| format!("{}: stft", entry.id))?;
            let out = oracle::enhance_spectra(&spectra, pair.mixture.len(), entry.sample_rate_hz, rir.as_ref(), &oracle_cfg)
                .context(|| format!("{}: {}", entry.id, cfg.mode.name()))?;
            let output = evaluate::output_path(&cfg.output_dir, &entry.id);
            wav::write_mono(&output, &out.waveform, Encoding::Float32)?;
            let info = DumpInfo {
                sample_rate_hz: Some(entry.sample_rate_hz),
                fft_len: Some(cfg.fft_len),
                array: entry.meta.geometry.as_ref().map(|g| g.array.clone()),
                config: config_value.clone(),
            };
            if cfg.dump_weights {
                dump::write_weights(&cfg.output_dir.join(format!("{}.weights.bin", entry.id)), &out.weights, &info)?;
            }
            if cfg.dump_terms {
                let mut spectra_out = vec![&out.zeroth];
                let mut labels = vec!["S0".to_string()];
                for t in &out.terms {
                    spectra_out.push(&t.value);
                    labels.push(format!("T({})", t.order));
                }
                spectra_out.push(&out.spectrum);
                labels.push("output".to_string());
                dump::write_spectra(&cfg.output_dir.join(format!("{}.terms.bin", entry.id)), &spectra_out, &labels, &info)?;
            }
            let loss = (cfg.mode == mcse_core::oracle::OracleMode::Taylor)
                .then(|| {
                    let target = oracle::target_spectrum(&spectra);
                    multiobjective_loss_with(
                        &out.zeroth,
                        &out.spectrum,
                        &out.zeroth,
                        &target,
                        &cfg.loss_weights(),
                        cfg.loss_compression,
                    )
                    .context(|| format!("{}: loss", entry.id))
                })
                .transpose()?;
            Ok(BeamformRecord {
                id: entry.id.clone(),
                output: relative(&output, &cfg.output_dir),
                unreliable_bins: out.unreliable_bins,
                loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    json::write(&cfg.output_dir.join("summary.json"), &records)?;
    write_resolved(&cfg.output_dir, cfg)?;
    Ok(records)
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<EvalReport> {
    let manifest = Manifest::load(&cfg.manifest)?;
    let source = match &cfg.outputs {
        Some(dir) => EstimateSource::Directory(dir),
        None => EstimateSource::Noisy,
    };
    let report = evaluate::evaluate_manifest(&manifest, source, cfg.seg_frame_ms)?;
    create_dir(&cfg.output_dir)?;
    report.write(&cfg.output_dir)?;
    write_resolved(&cfg.output_dir, cfg)?;
    Ok(report)
}

/// Weights built from steering vectors for the analytic beampattern modes.
pub fn analytic_weights(cfg: &BeampatternConfig, array: &ArrayGeometry) -> Result<BeamformerWeights> {
    let bins = cfg.fft_len / 2 + 1;
    let m = array.num_mics();
    let hz = |k: usize| k as f64 * cfg.sample_rate_hz as f64 / cfg.fft_len as f64;
    let steer = |deg: f64, k: usize| DVector::from_vec(steering_vector(array, deg.to_radians(), hz(k), cfg.speed_of_sound));
    let weights = match cfg.weights {
        PatternWeights::Reference => BeamformerWeights::reference_selector(m, bins),
        PatternWeights::DelayAndSum => {
            let vectors: Vec<_> = (0..bins).map(|k| steer(cfg.target_doa_deg, k) / C64::new(m as f64, 0.0)).collect();
            BeamformerWeights::time_invariant(&vectors).context(|| "delay-and-sum weights".to_string())?
        }
        PatternWeights::Mvdr => {
            let power = 10f64.powf(cfg.interferer_to_noise_db / 10.0);
            let mats = (0..bins)
                .map(|k| {
                    let d = steer(cfg.interferer_doa_deg, k);
                    &d * d.adjoint() * C64::new(power, 0.0) + DMatrix::<C64>::identity(m, m)
                })
                .collect();
            let cov = SpatialCovariance::new(mats).context(|| "interferer covariance".to_string())?;
            let rtf = Rtf::new((0..bins).map(|k| steer(cfg.target_doa_deg, k)).collect());
            mvdr_weights(&cov, &rtf, cfg.loading).context(|| "mvdr weights".to_string())?
        }
    };
    Ok(weights)
}

/// Beampattern rows `(theta_deg, freq_hz, db)`, angle-major.
pub fn beampattern_rows(cfg: &BeampatternConfig) -> Result<Vec<(f64, f64, f64)>> {
    let angles = cfg.angles_deg()?;
    let freqs = cfg.freqs_hz()?;
    let ula = || {
        ArrayGeometry::uniform_linear(cfg.num_mics, cfg.mic_spacing, [0.0; 3])
            .map_err(|e| Error::usage(format!("num_mics/mic_spacing: {e}")))
    };
    let (weights, array, spacing) = match &cfg.weights_file {
        Some(path) => {
            let (w, header) = dump::read_weights(path)?;
            let array = match header.array {
                Some(a) => a,
                None => ula()?,
            };
            let fs = header.sample_rate_hz.unwrap_or(cfg.sample_rate_hz);
            let fft_len = header.fft_len.unwrap_or(cfg.fft_len);
            (w, array, fs as f64 / fft_len as f64)
        }
        None => {
            let array = ula()?;
            (analytic_weights(cfg, &array)?, array, cfg.sample_rate_hz as f64 / cfg.fft_len as f64)
        }
    };
    let grid = BeampatternGrid {
        angles_rad: angles.iter().map(|a| a.to_radians()).collect(),
        freqs_hz: freqs.clone(),
        bin_spacing_hz: spacing,
        speed_of_sound: cfg.speed_of_sound,
        frame: cfg.frame,
    };
    let db = beampattern(&weights, &array, &grid).map_err(|e| Error::usage(format!("beampattern: {e}")))?;
    Ok(angles
        .iter()
        .zip(&db)
        .flat_map(|(&a, row)| freqs.iter().zip(row).map(move |(&f, &v)| (a, f, v)))
        .collect())
}

pub const BEAMPATTERN_FILE: &str = "beampattern.csv";

/// Write `beampattern.csv` with columns `theta_deg,freq_hz,db`.
pub fn beampattern_csv(cfg: &BeampatternConfig) -> Result<PathBuf> {
    let rows = beampattern_rows(cfg)?;
    let mut text = String::from("theta_deg,freq_hz,db\n");
    for (a, f, v) in rows {
        text.push_str(&format!("{a},{f},{v}\n"));
    }
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join(BEAMPATTERN_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    write_resolved(&cfg.output_dir, cfg)?;
    Ok(path)
}
