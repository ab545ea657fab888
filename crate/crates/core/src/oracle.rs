//! Oracle enhancement of synthesized scenes.
//!
//! Every mode sees the separated scene components: the direct-path speech
//! image drives the speech covariance and the reverberant tail plus noise
//! drives the noise covariance.

use crate::beamforming::{
    apply_beamformer, estimate_covariance, estimate_rtf, frame_mvdr, mvdr_weights, mwf_weights, BeamformerWeights, Rtf,
    DEFAULT_LAMBDA, DEFAULT_LOADING,
};
use crate::prelude::*;
use crate::room::{direct_path_rtf, Rir};
use crate::scene::MixturePair;
use crate::signal::{istft_with_len, stft_multichannel, MultichannelSpectrogram, Spectrogram, StftConfig, Waveform};
use crate::taylor::{
    oracle_correction, run_pipeline, CorrectionTerm, ExactContraction, ExternalOperator, FiniteDifference, LinearFilter,
    LiteralForm, OperatorContext, OperatorKind, TaylorConfig, TaylorTerm,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    #[default]
    TiMvdr,
    TiMwf,
    FrameMvdr,
    Taylor,
}

impl OracleMode {
    pub const ALL: [OracleMode; 4] = [OracleMode::TiMvdr, OracleMode::TiMwf, OracleMode::FrameMvdr, OracleMode::Taylor];

    pub fn name(self) -> &'static str {
        match self {
            OracleMode::TiMvdr => "ti-mvdr",
            OracleMode::TiMwf => "ti-mwf",
            OracleMode::FrameMvdr => "frame-mvdr",
            OracleMode::Taylor => "taylor",
        }
    }

    pub fn from_name(name: &str) -> Option<OracleMode> {
        OracleMode::ALL.into_iter().find(|m| m.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RtfMethod {
    /// Principal eigenvector of the oracle speech covariance.
    #[default]
    Eigenvector,
    /// Spectrum of the direct-path window of the target RIR.
    DirectPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionSource {
    /// `δ = c ⊙ S_ref − X`: minus the residual of the narrowband model
    /// `X = c·S + R`, which the Taylor expansion recovers exactly.
    #[default]
    SignalModel,
    /// `δ = S_image − X` with the time-domain direct-path image.
    DirectImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub mode: OracleMode,
    pub rtf: RtfMethod,
    pub loading: f64,
    pub lambda: f64,
    pub stft: StftConfig,
    pub taylor: TaylorConfig,
    pub correction: CorrectionSource,
    /// Finite-difference step for the `finite-difference` operator.
    pub fd_step: f64,
    /// Parameters for the `external` operator.
    pub external: Option<ExternalOperator>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            mode: OracleMode::TiMvdr,
            rtf: RtfMethod::Eigenvector,
            loading: DEFAULT_LOADING,
            lambda: DEFAULT_LAMBDA,
            stft: StftConfig::default(),
            taylor: TaylorConfig::default(),
            correction: CorrectionSource::SignalModel,
            fd_step: 1e-4,
            external: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub spectrum: Spectrogram,
    pub waveform: Waveform,
    pub weights: BeamformerWeights,
    /// Beamformer-only spectrum; equals `spectrum` outside Taylor mode.
    pub zeroth: Spectrogram,
    pub terms: Vec<TaylorTerm>,
    /// Bins whose speech covariance was not clearly rank-1.
    pub unreliable_bins: Vec<usize>,
}

/// STFTs of the scene components.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpectra {
    pub mixture: MultichannelSpectrogram,
    pub speech: MultichannelSpectrogram,
    pub interference: MultichannelSpectrogram,
}

impl SceneSpectra {
    pub fn new(pair: &MixturePair, stft: &StftConfig) -> Result<Self> {
        Ok(SceneSpectra {
            mixture: stft_multichannel(&pair.mixture, stft)?,
            speech: stft_multichannel(&pair.direct_speech_image, stft)?,
            interference: stft_multichannel(&pair.interference(), stft)?,
        })
    }
}

/// Multichannel image `c_m(f)·S(t, f)` of a single-channel spectrum.
pub fn model_image(rtf: &Rtf, source: &Spectrogram) -> Result<MultichannelSpectrogram> {
    if rtf.bins() != source.bins() {
        return Err(Error::invalid(format!("RTF has {} bins, spectrum has {}", rtf.bins(), source.bins())));
    }
    let mics = rtf.at(0).len();
    let mut out = MultichannelSpectrogram::zeros(mics, source.frames(), source.bins());
    for m in 0..mics {
        for t in 0..source.frames() {
            for f in 0..source.bins() {
                out.set(m, t, f, rtf.at(f)[m] * source.get(t, f));
            }
        }
    }
    Ok(out)
}

fn rtf_for(spectra_cov: &crate::beamforming::SpatialCovariance, rir: Option<&Rir>, cfg: &OracleConfig) -> Result<(Rtf, Vec<usize>)> {
    match cfg.rtf {
        RtfMethod::Eigenvector => {
            let est = estimate_rtf(spectra_cov)?;
            let unreliable = est.unreliable_bins();
            Ok((est.rtf, unreliable))
        }
        RtfMethod::DirectPath => {
            let rir = rir.ok_or_else(|| Error::invalid("direct-path RTF needs the target RIR"))?;
            Ok((direct_path_rtf(rir, &cfg.stft)?, Vec::new()))
        }
    }
}

fn correction_for(spectra: &SceneSpectra, rtf: &Rtf, cfg: &OracleConfig) -> Result<CorrectionTerm> {
    match cfg.correction {
        CorrectionSource::DirectImage => oracle_correction(&spectra.mixture, &spectra.speech),
        CorrectionSource::SignalModel => {
            let image = model_image(rtf, &spectra.speech.channel(0))?;
            oracle_correction(&spectra.mixture, &image)
        }
    }
}

/// Run one oracle mode on a synthesized scene. `rir` is the target RIR and
/// is only needed for the direct-path RTF.
pub fn enhance(pair: &MixturePair, rir: Option<&Rir>, cfg: &OracleConfig) -> Result<OracleOutput> {
    let spectra = SceneSpectra::new(pair, &cfg.stft)?;
    enhance_spectra(&spectra, pair.mixture.len(), pair.mixture.sample_rate_hz(), rir, cfg)
}

pub fn enhance_spectra(spectra: &SceneSpectra, len: usize, sample_rate_hz: u32, rir: Option<&Rir>, cfg: &OracleConfig) -> Result<OracleOutput> {
    let (weights, zeroth, terms, spectrum, unreliable) = match cfg.mode {
        OracleMode::FrameMvdr => {
            let fm = frame_mvdr(&spectra.mixture, &spectra.speech, &spectra.interference, cfg.lambda, cfg.loading)?;
            let out = apply_beamformer(&fm.weights, &spectra.mixture)?;
            (fm.weights, out.clone(), Vec::new(), out, Vec::new())
        }
        OracleMode::TiMwf => {
            let cov_s = estimate_covariance(&spectra.speech)?;
            let cov_n = estimate_covariance(&spectra.interference)?;
            let w = mwf_weights(&cov_s, &cov_n, cfg.loading)?;
            let out = apply_beamformer(&w, &spectra.mixture)?;
            (w, out.clone(), Vec::new(), out, Vec::new())
        }
        OracleMode::TiMvdr | OracleMode::Taylor => {
            let cov_s = estimate_covariance(&spectra.speech)?;
            let cov_n = estimate_covariance(&spectra.interference)?;
            let (rtf, unreliable) = rtf_for(&cov_s, rir, cfg)?;
            let w = mvdr_weights(&cov_n, &rtf, cfg.loading)?;
            let s0 = apply_beamformer(&w, &spectra.mixture)?;
            if cfg.mode == OracleMode::TiMvdr {
                (w, s0.clone(), Vec::new(), s0, unreliable)
            } else {
                let delta = correction_for(spectra, &rtf, cfg)?;
                let ctx = OperatorContext::new(spectra.mixture.clone(), Some(delta))?;
                let function = LinearFilter { weights: w.clone() };
                let out = match cfg.taylor.operator {
                    OperatorKind::Exact => run_pipeline(&s0, &ExactContraction { function }, &ctx, &cfg.taylor)?,
                    OperatorKind::Literal => run_pipeline(&s0, &LiteralForm { function }, &ctx, &cfg.taylor)?,
                    OperatorKind::FiniteDifference => {
                        run_pipeline(&s0, &FiniteDifference::new(function, cfg.fd_step), &ctx, &cfg.taylor)?
                    }
                    OperatorKind::External => {
                        let op = cfg
                            .external
                            .as_ref()
                            .ok_or_else(|| Error::invalid("the external operator needs its parameters"))?;
                        run_pipeline(&s0, op, &ctx, &cfg.taylor)?
                    }
                };
                (w, out.zeroth, out.terms, out.output, unreliable)
            }
        }
    };
    let waveform = istft_with_len(&spectrum, &cfg.stft, sample_rate_hz, len)?;
    Ok(OracleOutput { spectrum, waveform, weights, zeroth, terms, unreliable_bins: unreliable })
}

/// STFT-domain anechoic target, the reference channel of the direct image.
pub fn target_spectrum(spectra: &SceneSpectra) -> Spectrogram {
    spectra.speech.channel(0)
}

