//! Subcommand configuration records and their layering.
//!
//! Every record serializes to a flat JSON object. A run starts from the
//! record's defaults, applies the keys of an optional JSON file, then the
//! command-line overrides, so the precedence is CLI > file > defaults.

use std::path::{Path, PathBuf};

use mcse_core::beamforming::{DEFAULT_LAMBDA, DEFAULT_LOADING};
use mcse_core::oracle::{CorrectionSource, OracleConfig, OracleMode, RtfMethod};
use mcse_core::room::{DelayInterpolation, Point3, RoomSpec, DEFAULT_HIGHPASS_HZ, DEFAULT_SPEED_OF_SOUND};
use mcse_core::scene::{DoaBin, SceneSpec};
use mcse_core::signal::StftConfig;
use mcse_core::taylor::{LossWeights, OperatorKind, TaylorConfig, DEFAULT_LOSS_COMPRESSION};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

/// Resolve a config record from its defaults, an optional JSON file and
/// command-line overrides. Unknown keys and ill-typed values are usage
/// errors naming the key.
pub fn resolve<T>(file: Option<&Path>, overrides: Map<String, Value>) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Value::Object(defaults) = serde_json::to_value(T::default()).expect("config records serialize") else {
        unreachable!("config records are JSON objects")
    };
    let mut layered = Map::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::usage(format!("{}: not valid JSON: {e}", path.display())))?;
        let Value::Object(obj) = value else {
            return Err(Error::usage(format!("{}: config must be a JSON object", path.display())));
        };
        for (k, v) in obj {
            if !defaults.contains_key(&k) {
                return Err(Error::usage(format!("{}: unknown config key `{k}`", path.display())));
            }
            layered.insert(k, v);
        }
    }
    for (k, v) in overrides {
        if !defaults.contains_key(&k) {
            return Err(Error::usage(format!("unknown config key `{k}`")));
        }
        layered.insert(k, v);
    }
    let mut merged = defaults.clone();
    merged.extend(layered.clone());
    match serde_json::from_value::<T>(Value::Object(merged)) {
        Ok(cfg) => Ok(cfg),
        Err(err) => {
            for (k, v) in &layered {
                let mut single = defaults.clone();
                single.insert(k.clone(), v.clone());
                if let Err(e) = serde_json::from_value::<T>(Value::Object(single)) {
                    return Err(Error::usage(format!("config key `{k}`: {e}")));
                }
            }
            Err(Error::usage(format!("invalid configuration: {err}")))
        }
    }
}

/// Parse `key=value`; the value is read as JSON and falls back to a string.
pub fn parse_assignment(s: &str) -> std::result::Result<(String, Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Seed of the `index`-th scene of a batch (splitmix64 of the pair).
pub fn scene_seed(base: u64, index: usize) -> u64 {
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn scene_usage(err: mcse_core::Error) -> Error {
    Error::usage(err.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateRirConfig {
    pub output_dir: PathBuf,
    /// Number of random scenes drawn from the scene ranges when `room_dims`
    /// is not set; each yields a target and a noise RIR.
    pub count: usize,
    /// Explicit room; set together with `source_pos`.
    pub room_dims: Option<Point3>,
    pub source_pos: Option<Point3>,
    /// Centre of the ULA in the explicit room; defaults to the room centre.
    pub array_center: Option<Point3>,
    /// T60 of the explicit room; 0 gives fully absorbing walls.
    pub t60: f64,
    pub max_order: Option<usize>,
    pub rir_len: Option<usize>,
    pub highpass_hz: Option<f64>,
    /// Odd tap count for windowed-sinc fractional delays; unset rounds
    /// delays to the nearest sample.
    pub fractional_delay_taps: Option<usize>,
    #[serde(flatten)]
    pub scene: SceneSpec,
}

impl Default for SimulateRirConfig {
    fn default() -> Self {
        SimulateRirConfig {
            output_dir: PathBuf::from("rirs"),
            count: 1,
            room_dims: None,
            source_pos: None,
            array_center: None,
            t60: 0.3,
            max_order: None,
            rir_len: None,
            highpass_hz: Some(DEFAULT_HIGHPASS_HZ),
            fractional_delay_taps: None,
            scene: SceneSpec::default(),
        }
    }
}

impl SimulateRirConfig {
    fn interpolation(&self) -> DelayInterpolation {
        match self.fractional_delay_taps {
            Some(taps) => DelayInterpolation::WindowedSinc { taps },
            None => DelayInterpolation::Nearest,
        }
    }

    /// Apply the RIR-level settings to a room drawn or built elsewhere.
    pub fn apply(&self, room: &mut RoomSpec) {
        room.max_order = self.max_order;
        room.rir_len = self.rir_len;
        room.highpass_hz = self.highpass_hz;
        room.interpolation = self.interpolation();
        room.absorption = self.scene.absorption;
        room.speed_of_sound = self.scene.speed_of_sound;
    }

    /// The explicit room, if one is configured.
    pub fn explicit_room(&self) -> Result<Option<RoomSpec>> {
        let Some(dims) = self.room_dims else {
            if self.source_pos.is_some() {
                return Err(Error::usage("source_pos needs room_dims"));
            }
            return Ok(None);
        };
        let source = self.source_pos.ok_or_else(|| Error::usage("room_dims needs source_pos"))?;
        if dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::usage(format!("room_dims must be positive, got {dims:?}")));
        }
        if !(self.t60 >= 0.0) || !self.t60.is_finite() {
            return Err(Error::usage(format!("t60 must be non-negative, got {}", self.t60)));
        }
        let inside = |p: &Point3| p.iter().zip(&dims).all(|(x, d)| *x > 0.0 && x < d);
        if !inside(&source) {
            return Err(Error::usage(format!("source_pos {source:?} is not strictly inside room_dims {dims:?}")));
        }
        let center = self.array_center.unwrap_or([dims[0] / 2.0, dims[1] / 2.0, dims[2] / 2.0]);
        let array = mcse_core::room::ArrayGeometry::uniform_linear(self.scene.num_mics, self.scene.mic_spacing, center)
            .map_err(|e| Error::usage(format!("num_mics/mic_spacing: {e}")))?;
        if let Some(p) = array.mic_positions.iter().find(|p| !inside(p)) {
            return Err(Error::usage(format!(
                "array_center {center:?}: microphone at {p:?} is not strictly inside room_dims {dims:?}"
            )));
        }
        let mut room = RoomSpec::new(dims, self.t60, source, array, self.scene.sample_rate_hz);
        self.apply(&mut room);
        room.validate().map_err(scene_usage)?;
        room.absorption_coefficient().map_err(scene_usage)?;
        Ok(Some(room))
    }

    pub fn validate(&self) -> Result<()> {
        if self.room_dims.is_none() {
            self.scene.validate().map_err(scene_usage)?;
            if self.count == 0 {
                return Err(Error::usage("count must be at least 1"));
            }
        }
        self.explicit_room()?;
        if let Some(fc) = self.highpass_hz {
            if !(fc > 0.0 && fc < self.scene.sample_rate_hz as f64 / 2.0) {
                return Err(Error::usage(format!("highpass_hz must lie in (0, fs/2), got {fc}")));
            }
        }
        if let Some(taps) = self.fractional_delay_taps {
            if taps < 3 || taps % 2 == 0 {
                return Err(Error::usage(format!("fractional_delay_taps must be odd and at least 3, got {taps}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDatasetConfig {
    pub output_dir: PathBuf,
    pub count: usize,
    pub id_prefix: String,
    /// Length of each scene; longer speech files are truncated.
    pub duration_s: f64,
    /// Directory of mono speech WAVs; unset uses synthetic speech-like sources.
    pub speech_dir: Option<PathBuf>,
    /// Directory of mono noise WAVs; unset uses synthetic noise.
    pub noise_dir: Option<PathBuf>,
    /// Relative share of scenes per DOA bin (0-15, 15-45, 45-90, 90-180);
    /// unset leaves the DOA difference unconstrained.
    pub doa_bin_proportions: Option<[f64; 4]>,
    #[serde(flatten)]
    pub scene: SceneSpec,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        SynthDatasetConfig {
            output_dir: PathBuf::from("dataset"),
            count: 10,
            id_prefix: "scene".to_string(),
            duration_s: 4.0,
            speech_dir: None,
            noise_dir: None,
            doa_bin_proportions: None,
            scene: SceneSpec::default(),
        }
    }
}

impl SynthDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate().map_err(scene_usage)?;
        if self.count == 0 {
            return Err(Error::usage("count must be at least 1"));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::usage(format!("duration_s must be positive, got {}", self.duration_s)));
        }
        if self.id_prefix.is_empty() || !self.id_prefix.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::usage(format!("id_prefix {:?} must be a non-empty name of [A-Za-z0-9_-]", self.id_prefix)));
        }
        if let Some(p) = self.doa_bin_proportions {
            if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || !(p.iter().sum::<f64>() > 0.0) {
                return Err(Error::usage(format!(
                    "doa_bin_proportions must be non-negative with a positive sum, got {p:?}"
                )));
            }
            for (bin, share) in DoaBin::ALL.into_iter().zip(p) {
                if share > 0.0 {
                    let spec = SceneSpec { doa_bin: Some(bin), ..self.scene.clone() };
                    spec.validate().map_err(|e| Error::usage(format!("doa_bin_proportions: {e}")))?;
                }
            }
        }
        Ok(())
    }

    /// DOA bin for every scene index, honouring the proportions with
    /// largest-remainder rounding.
    pub fn bin_schedule(&self) -> Vec<Option<DoaBin>> {
        let Some(p) = self.doa_bin_proportions else {
            return vec![self.scene.doa_bin; self.count];
        };
        let total: f64 = p.iter().sum();
        let exact: Vec<f64> = p.iter().map(|x| x / total * self.count as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let short = self.count - counts.iter().sum::<usize>();
        for &k in order.iter().take(short) {
            counts[k] += 1;
        }
        DoaBin::ALL.into_iter().zip(counts).flat_map(|(bin, n)| std::iter::repeat_n(Some(bin), n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamformConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub mode: OracleMode,
    pub rtf: RtfMethod,
    pub loading: f64,
    pub lambda: f64,
    pub window_len: usize,
    pub hop_len: usize,
    pub fft_len: usize,
    /// Number of high-order Taylor terms (taylor mode only).
    pub q: usize,
    pub operator: OperatorKind,
    pub factorial_scaling: bool,
    pub correction: CorrectionSource,
    pub fd_step: f64,
    /// JSON file holding the external operator's per-bin gains.
    pub external_operator: Option<PathBuf>,
    pub loss_alpha: f64,
    pub loss_beta: f64,
    pub loss_compression: f64,
    pub dump_weights: bool,
    pub dump_terms: bool,
}

impl Default for BeamformConfig {
    fn default() -> Self {
        let stft = StftConfig::default();
        let taylor = TaylorConfig::default();
        let loss = LossWeights::default();
        BeamformConfig {
            manifest: PathBuf::from("dataset/manifest.json"),
            output_dir: PathBuf::from("enhanced"),
            mode: OracleMode::TiMvdr,
            rtf: RtfMethod::Eigenvector,
            loading: DEFAULT_LOADING,
            lambda: DEFAULT_LAMBDA,
            window_len: stft.window_len,
            hop_len: stft.hop_len,
            fft_len: stft.fft_len,
            q: taylor.order_q,
            operator: taylor.operator,
            factorial_scaling: taylor.factorial_scaling,
            correction: CorrectionSource::SignalModel,
            fd_step: 1e-4,
            external_operator: None,
            loss_alpha: loss.alpha,
            loss_beta: loss.beta,
            loss_compression: DEFAULT_LOSS_COMPRESSION,
            dump_weights: false,
            dump_terms: false,
        }
    }
}

impl BeamformConfig {
    pub fn stft(&self) -> StftConfig {
        StftConfig { window_len: self.window_len, hop_len: self.hop_len, fft_len: self.fft_len, ..StftConfig::default() }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { alpha: self.loss_alpha, beta: self.loss_beta }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft().validate().map_err(|e| Error::usage(format!("window_len/hop_len/fft_len: {e}")))?;
        if !(self.loading >= 0.0) || !self.loading.is_finite() {
            return Err(Error::usage(format!("loading must be non-negative, got {}", self.loading)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::usage(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        if !(self.fd_step > 0.0) || !self.fd_step.is_finite() {
            return Err(Error::usage(format!("fd_step must be positive, got {}", self.fd_step)));
        }
        if !(self.loss_compression > 0.0 && self.loss_compression <= 1.0) {
            return Err(Error::usage(format!("loss_compression must lie in (0, 1], got {}", self.loss_compression)));
        }
        self.loss_weights().validate().map_err(|e| Error::usage(format!("loss_alpha/loss_beta: {e}")))?;
        if self.mode == OracleMode::Taylor && self.operator == OperatorKind::External && self.external_operator.is_none() {
            return Err(Error::usage("operator `external` needs external_operator"));
        }
        Ok(())
    }

    pub fn oracle(&self, external: Option<mcse_core::taylor::ExternalOperator>) -> OracleConfig {
        OracleConfig {
            mode: self.mode,
            rtf: self.rtf,
            loading: self.loading,
            lambda: self.lambda,
            stft: self.stft(),
            taylor: TaylorConfig { order_q: self.q, operator: self.operator, factorial_scaling: self.factorial_scaling },
            correction: self.correction,
            fd_step: self.fd_step,
            external,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub manifest: PathBuf,
    /// Directory holding `<id>.wav` per manifest entry.
    pub outputs: Option<PathBuf>,
    /// Score the unprocessed reference channel instead of `outputs`.
    pub noisy: bool,
    pub output_dir: PathBuf,
    pub seg_frame_ms: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            manifest: PathBuf::from("dataset/manifest.json"),
            outputs: None,
            noisy: false,
            output_dir: PathBuf::from("report"),
            seg_frame_ms: crate::evaluate::DEFAULT_SEG_FRAME_MS,
        }
    }
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.outputs, self.noisy) {
            (None, false) => return Err(Error::usage("outputs must be set unless noisy is true")),
            (Some(_), true) => return Err(Error::usage("outputs and noisy are mutually exclusive")),
            _ => {}
        }
        if !(self.seg_frame_ms > 0.0) || !self.seg_frame_ms.is_finite() {
            return Err(Error::usage(format!("seg_frame_ms must be positive, got {}", self.seg_frame_ms)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternWeights {
    /// MVDR for a point interferer in spatially white sensor noise.
    #[default]
    Mvdr,
    /// Unit-gain delay-and-sum steered to the target.
    DelayAndSum,
    /// Reference-microphone selector.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeampatternConfig {
    pub output_dir: PathBuf,
    /// Weight dump to analyse; unset builds `weights` analytically.
    pub weights_file: Option<PathBuf>,
    pub weights: PatternWeights,
    pub target_doa_deg: f64,
    pub interferer_doa_deg: f64,
    /// Interferer power over the white sensor noise, per microphone.
    pub interferer_to_noise_db: f64,
    pub num_mics: usize,
    pub mic_spacing: f64,
    pub sample_rate_hz: u32,
    pub fft_len: usize,
    pub speed_of_sound: f64,
    pub loading: f64,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub angle_step_deg: f64,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub freq_step_hz: f64,
    /// Frame analysed for frame-level weights.
    pub frame: usize,
}

impl Default for BeampatternConfig {
    fn default() -> Self {
        BeampatternConfig {
            output_dir: PathBuf::from("beampattern"),
            weights_file: None,
            weights: PatternWeights::Mvdr,
            target_doa_deg: 125.0,
            interferer_doa_deg: 55.0,
            interferer_to_noise_db: 20.0,
            num_mics: 6,
            mic_spacing: 0.05,
            sample_rate_hz: 16000,
            fft_len: 320,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            loading: DEFAULT_LOADING,
            angle_min_deg: 0.0,
            angle_max_deg: 180.0,
            angle_step_deg: 1.0,
            freq_min_hz: 0.0,
            freq_max_hz: 8000.0,
            freq_step_hz: 250.0,
            frame: 0,
        }
    }
}

fn grid(name: &str, lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() || !(step > 0.0) {
        return Err(Error::usage(format!("{name}: need min <= max and a positive step, got {lo}..{hi} step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

impl BeampatternConfig {
    pub fn angles_deg(&self) -> Result<Vec<f64>> {
        grid("angle_min_deg/angle_max_deg/angle_step_deg", self.angle_min_deg, self.angle_max_deg, self.angle_step_deg)
    }

    pub fn freqs_hz(&self) -> Result<Vec<f64>> {
        grid("freq_min_hz/freq_max_hz/freq_step_hz", self.freq_min_hz, self.freq_max_hz, self.freq_step_hz)
    }

    pub fn validate(&self) -> Result<()> {
        self.angles_deg()?;
        let freqs = self.freqs_hz()?;
        if self.weights_file.is_none() {
            if self.num_mics == 0 || !(self.mic_spacing > 0.0) {
                return Err(Error::usage("num_mics must be positive and mic_spacing positive"));
            }
            if self.sample_rate_hz == 0 || self.fft_len < 2 {
                return Err(Error::usage("sample_rate_hz and fft_len must be positive"));
            }
            let nyquist = self.sample_rate_hz as f64 / 2.0;
            if freqs.last().is_some_and(|f| *f > nyquist) || !(self.freq_min_hz >= 0.0) {
                return Err(Error::usage(format!("freq_min_hz/freq_max_hz must lie in [0, {nyquist}] Hz")));
            }
            if !self.interferer_to_noise_db.is_finite() {
                return Err(Error::usage("interferer_to_noise_db must be finite"));
            }
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::usage("speed_of_sound must be positive"));
        }
        if !(self.loading >= 0.0) {
            return Err(Error::usage("loading must be non-negative"));
        }
        Ok(())
    }
}
