//! Spatial covariance estimation and oracle beamformers.
//!
//! MVDR: `w_f = (Phi_f + eps I)^-1 c_f / (c_f^H (Phi_f + eps I)^-1 c_f)`
//! with `eps = loading * trace(Phi_f) / M`. The multichannel Wiener filter
//! solves `(Phi_s + Phi_n + eps I) w = Phi_s e_ref`; for a rank-1 speech
//! covariance it factors into the MVDR weights scaled by the single-channel
//! Wiener gain `xi / (1 + xi)`.

use crate::prelude::*;
use crate::room::{steering_vector, ArrayGeometry};
use crate::signal::{MultichannelSpectrogram, Spectrogram};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub const DEFAULT_LOADING: f64 = 1e-6;
pub const DEFAULT_LAMBDA: f64 = 0.95;
/// Eigenvalue ratio below which a principal-eigenvector RTF is flagged.
pub const EIGEN_GAP_WARNING: f64 = 10.0;

/// One `M x M` covariance per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    mats: Vec<DMatrix<C64>>,
}

impl SpatialCovariance {
    pub fn new(mats: Vec<DMatrix<C64>>) -> Result<Self> {
        let m = mats.first().map(|a| a.nrows()).ok_or_else(|| Error::invalid("covariance has no bins"))?;
        if mats.iter().any(|a| a.nrows() != m || a.ncols() != m) {
            return Err(Error::invalid("covariance matrices must all be square and the same size"));
        }
        Ok(SpatialCovariance { mats })
    }

    pub fn bins(&self) -> usize {
        self.mats.len()
    }

    pub fn num_channels(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn at(&self, f: usize) -> &DMatrix<C64> {
        &self.mats[f]
    }

    pub fn matrices(&self) -> &[DMatrix<C64>] {
        &self.mats
    }

    pub fn add(&self, other: &SpatialCovariance) -> Result<Self> {
        if self.bins() != other.bins() || self.num_channels() != other.num_channels() {
            return Err(Error::invalid("covariance shapes differ"));
        }
        Ok(SpatialCovariance { mats: self.mats.iter().zip(&other.mats).map(|(a, b)| a + b).collect() })
    }
}

/// Recursively smoothed covariances, one per `(frame, bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCovariance {
    frames: usize,
    bins: usize,
    mats: Vec<DMatrix<C64>>,
}

impl FrameCovariance {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn at(&self, t: usize, f: usize) -> &DMatrix<C64> {
        &self.mats[t * self.bins + f]
    }

    /// The covariance snapshot of one frame across all bins.
    pub fn frame(&self, t: usize) -> SpatialCovariance {
        SpatialCovariance { mats: self.mats[t * self.bins..(t + 1) * self.bins].to_vec() }
    }
}

/// Relative transfer functions, one `M`-vector per bin with element 0 = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Rtf {
    vectors: Vec<DVector<C64>>,
}

impl Rtf {
    pub fn new(vectors: Vec<DVector<C64>>) -> Self {
        Rtf { vectors }
    }

    pub fn bins(&self) -> usize {
        self.vectors.len()
    }

    pub fn at(&self, f: usize) -> &DVector<C64> {
        &self.vectors[f]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtfEstimate {
    pub rtf: Rtf,
    /// Ratio of the two largest eigenvalues per bin (infinite for `M = 1`).
    pub eigen_gaps: Vec<f64>,
}

impl RtfEstimate {
    /// Bins whose eigen-gap is below [`EIGEN_GAP_WARNING`].
    pub fn unreliable_bins(&self) -> Vec<usize> {
        (0..self.eigen_gaps.len()).filter(|&f| self.eigen_gaps[f] < EIGEN_GAP_WARNING).collect()
    }
}

/// Time-invariant (`frames = None`) or frame-level beamformer weights,
/// stored `[frame][bin][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    frames: Option<usize>,
    bins: usize,
    channels: usize,
    data: Vec<C64>,
}

impl BeamformerWeights {
    pub fn time_invariant(vectors: &[DVector<C64>]) -> Result<Self> {
        let channels = vectors.first().map(|v| v.len()).ok_or_else(|| Error::invalid("no weight vectors"))?;
        if vectors.iter().any(|v| v.len() != channels) {
            return Err(Error::invalid("weight vectors differ in length"));
        }
        let data = vectors.iter().flat_map(|v| v.iter().copied()).collect();
        Ok(BeamformerWeights { frames: None, bins: vectors.len(), channels, data })
    }

    pub fn from_raw(frames: Option<usize>, bins: usize, channels: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != frames.unwrap_or(1) * bins * channels {
            return Err(Error::invalid("weight payload does not match its dimensions"));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        Ok(BeamformerWeights { frames, bins, channels, data })
    }

    /// Weights that pass the reference channel through untouched.
    pub fn reference_selector(channels: usize, bins: usize) -> Self {
        let mut data = vec![C64::new(0.0, 0.0); channels * bins];
        for f in 0..bins {
            data[f * channels] = C64::new(1.0, 0.0);
        }
        BeamformerWeights { frames: None, bins, channels, data }
    }

    pub fn frames(&self) -> Option<usize> {
        self.frames
    }

    pub fn is_time_invariant(&self) -> bool {
        self.frames.is_none()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    /// Weight vector for frame `t` and bin `f`; `t` is ignored for
    /// time-invariant weights.
    pub fn at(&self, t: usize, f: usize) -> &[C64] {
        let t = if self.frames.is_some() { t } else { 0 };
        let start = (t * self.bins + f) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn vector(&self, t: usize, f: usize) -> DVector<C64> {
        DVector::from_column_slice(self.at(t, f))
    }

    pub fn scaled_per_bin(&self, gains: &[f64]) -> Result<Self> {
        if gains.len() != self.bins {
            return Err(Error::invalid("one gain per bin is required"));
        }
        let mut out = self.clone();
        for (i, w) in out.data.iter_mut().enumerate() {
            *w *= gains[(i / self.channels) % self.bins];
        }
        Ok(out)
    }
}

fn outer(x: &DVector<C64>) -> DMatrix<C64> {
    x * x.adjoint()
}

fn hermitize(a: &DMatrix<C64>) -> DMatrix<C64> {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

fn trace_re(a: &DMatrix<C64>) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

fn check_nonempty(spec: &MultichannelSpectrogram) -> Result<()> {
    if spec.frames() == 0 || spec.bins() == 0 {
        return Err(Error::invalid("spectrogram is empty"));
    }
    Ok(())
}

fn tf_vector(spec: &MultichannelSpectrogram, t: usize, f: usize) -> DVector<C64> {
    DVector::from_iterator(spec.num_channels(), (0..spec.num_channels()).map(|m| spec.get(m, t, f)))
}

/// Batch covariance `Phi_f = (1/T) sum_t X_tf X_tf^H`.
pub fn estimate_covariance(spec: &MultichannelSpectrogram) -> Result<SpatialCovariance> {
    check_nonempty(spec)?;
    let m = spec.num_channels();
    let scale = C64::new(1.0 / spec.frames() as f64, 0.0);
    let mats = (0..spec.bins())
        .map(|f| {
            let mut acc = DMatrix::<C64>::zeros(m, m);
            for t in 0..spec.frames() {
                acc += outer(&tf_vector(spec, t, f));
            }
            hermitize(&(acc * scale))
        })
        .collect();
    Ok(SpatialCovariance { mats })
}

fn validate_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid(format!("smoothing factor must lie in (0, 1), got {lambda}")));
    }
    Ok(())
}

/// `Phi_t = lambda Phi_{t-1} + (1 - lambda) X_t X_t^H`, seeded with the
/// first frame's outer product.
pub fn recursive_covariance(spec: &MultichannelSpectrogram, lambda: f64) -> Result<FrameCovariance> {
    validate_lambda(lambda)?;
    check_nonempty(spec)?;
    let (frames, bins) = (spec.frames(), spec.bins());
    let mut mats = Vec::with_capacity(frames * bins);
    let mut state: Vec<DMatrix<C64>> = (0..bins).map(|f| outer(&tf_vector(spec, 0, f))).collect();
    mats.extend(state.iter().cloned());
    for t in 1..frames {
        for (f, phi) in state.iter_mut().enumerate() {
            smooth(phi, &tf_vector(spec, t, f), lambda);
            mats.push(phi.clone());
        }
    }
    Ok(FrameCovariance { frames, bins, mats })
}

fn smooth(phi: &mut DMatrix<C64>, x: &DVector<C64>, lambda: f64) {
    *phi *= C64::new(lambda, 0.0);
    *phi += outer(x) * C64::new(1.0 - lambda, 0.0);
    let h = hermitize(phi);
    *phi = h;
}

/// Principal eigenvector of a Hermitian matrix, deterministic under ties,
/// together with the ratio of the two largest eigenvalues.
fn principal_vector(phi: &DMatrix<C64>) -> (DVector<C64>, f64) {
    let m = phi.nrows();
    let eig = SymmetricEigen::new(hermitize(phi));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    let gap = if m == 1 {
        f64::INFINITY
    } else {
        let second = eig.eigenvalues[order[1]];
        if second > 0.0 { top / second } else if top > 0.0 { f64::INFINITY } else { 1.0 }
    };
    let tol = 1e-10 * top.abs().max(f64::MIN_POSITIVE);
    let tied: Vec<usize> = order.iter().copied().filter(|&i| (eig.eigenvalues[i] - top).abs() <= tol).collect();
    if tied.len() == 1 {
        return (eig.eigenvectors.column(tied[0]).into_owned(), gap);
    }
    // Degenerate top eigenspace: project the lowest-index basis vector that
    // has a component in it.
    for k in 0..m {
        let mut v = DVector::<C64>::zeros(m);
        for &i in &tied {
            let col = eig.eigenvectors.column(i);
            v += col * col[k].conj();
        }
        if v.norm() > 1e-8 {
            return (v.normalize(), gap);
        }
    }
    (eig.eigenvectors.column(tied[0]).into_owned(), gap)
}

fn rtf_from_covariance(phi: &DMatrix<C64>, bin: usize) -> Result<(DVector<C64>, f64)> {
    let (v, gap) = principal_vector(phi);
    let reference = v[0];
    if !(reference.norm() >= 1e-10 * v.norm()) || v.norm() == 0.0 {
        return Err(Error::SingularRtf { bin });
    }
    let mut c = v / reference;
    c[0] = C64::new(1.0, 0.0);
    Ok((c, gap))
}

/// RTF as the principal eigenvector of the speech covariance, normalized by
/// its reference element.
pub fn estimate_rtf(cov_speech: &SpatialCovariance) -> Result<RtfEstimate> {
    let mut vectors = Vec::with_capacity(cov_speech.bins());
    let mut eigen_gaps = Vec::with_capacity(cov_speech.bins());
    for (f, phi) in cov_speech.mats.iter().enumerate() {
        let (c, gap) = rtf_from_covariance(phi, f)?;
        vectors.push(c);
        eigen_gaps.push(gap);
    }
    Ok(RtfEstimate { rtf: Rtf { vectors }, eigen_gaps })
}

fn loaded(phi: &DMatrix<C64>, loading: f64) -> DMatrix<C64> {
    let m = phi.nrows();
    let eps = loading * trace_re(phi) / m as f64;
    let mut a = hermitize(phi);
    for i in 0..m {
        a[(i, i)] += C64::new(eps, 0.0);
    }
    a
}

fn hermitian_solve(a: &DMatrix<C64>, b: &DVector<C64>) -> Option<DVector<C64>> {
    let x = a.clone().cholesky()?.solve(b);
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(x)
}

fn check_loading(loading: f64) -> Result<()> {
    if !(loading >= 0.0) || !loading.is_finite() {
        return Err(Error::invalid(format!("diagonal loading must be non-negative, got {loading}")));
    }
    Ok(())
}

fn mvdr_vector(phi_n: &DMatrix<C64>, c: &DVector<C64>, loading: f64, bin: usize) -> Result<DVector<C64>> {
    let a = loaded(phi_n, loading);
    let x = hermitian_solve(&a, c).ok_or(Error::SingularMatrix { frame: None, bin })?;
    let denom = c.dotc(&x);
    if !(denom.norm() > 0.0) || !denom.re.is_finite() {
        return Err(Error::SingularMatrix { frame: None, bin });
    }
    Ok(x / denom)
}

pub fn mvdr_weights(cov_noise: &SpatialCovariance, rtf: &Rtf, loading: f64) -> Result<BeamformerWeights> {
    check_loading(loading)?;
    if cov_noise.bins() != rtf.bins() {
        return Err(Error::invalid("noise covariance and RTF have different bin counts"));
    }
    if rtf.vectors.iter().any(|c| c.len() != cov_noise.num_channels()) {
        return Err(Error::invalid("RTF length does not match the channel count"));
    }
    let vectors = (0..rtf.bins())
        .map(|f| mvdr_vector(cov_noise.at(f), rtf.at(f), loading, f))
        .collect::<Result<Vec<_>>>()?;
    BeamformerWeights::time_invariant(&vectors)
}

/// `w = (Phi_s + Phi_n + eps I)^-1 Phi_s e_ref`.
pub fn mwf_weights(cov_speech: &SpatialCovariance, cov_noise: &SpatialCovariance, loading: f64) -> Result<BeamformerWeights> {
    check_loading(loading)?;
    let total = cov_speech.add(cov_noise)?;
    let vectors = (0..total.bins())
        .map(|f| {
            let a = loaded(total.at(f), loading);
            let rhs = cov_speech.at(f).column(0).into_owned();
            hermitian_solve(&a, &rhs).ok_or(Error::SingularMatrix { frame: None, bin: f })
        })
        .collect::<Result<Vec<_>>>()?;
    BeamformerWeights::time_invariant(&vectors)
}

/// Per-bin single-channel Wiener gain `xi / (1 + xi)` that follows a
/// distortionless beamformer, with `xi = w^H Phi_s w / w^H Phi_n w`.
pub fn mvdr_postfilter_gain(cov_speech: &SpatialCovariance, cov_noise: &SpatialCovariance, weights: &BeamformerWeights) -> Result<Vec<f64>> {
    if cov_speech.bins() != weights.bins() || cov_noise.bins() != weights.bins() {
        return Err(Error::invalid("covariances and weights have different bin counts"));
    }
    Ok((0..weights.bins())
        .map(|f| {
            let w = weights.vector(0, f);
            let s = w.dotc(&(cov_speech.at(f) * &w)).re;
            let n = w.dotc(&(cov_noise.at(f) * &w)).re;
            let xi = if n > 0.0 { s / n } else { f64::INFINITY };
            if xi.is_infinite() { 1.0 } else { xi / (1.0 + xi) }
        })
        .collect())
}

/// Frame-level MVDR result: weights plus the per-frame RTFs they satisfy.
#[derive(Debug, Clone)]
pub struct FrameMvdr {
    pub weights: BeamformerWeights,
    /// `rtfs[t * bins + f]`; `None` where the frame reused earlier weights.
    pub rtfs: Vec<Option<DVector<C64>>>,
}

/// MVDR recomputed every frame from recursively smoothed oracle speech and
/// noise covariances; the RTF is the principal eigenvector of each frame's
/// speech covariance.
///
/// Frames whose speech or noise covariance is still empty (trace below
/// `1e-10` of the utterance-level trace at that bin) carry the previous
/// frame's weights, or the reference selector before any valid frame.
pub fn frame_mvdr(
    spec: &MultichannelSpectrogram,
    oracle_speech: &MultichannelSpectrogram,
    oracle_noise: &MultichannelSpectrogram,
    lambda: f64,
    loading: f64,
) -> Result<FrameMvdr> {
    validate_lambda(lambda)?;
    check_loading(loading)?;
    check_nonempty(spec)?;
    spec.check_same_shape(oracle_speech, "frame MVDR speech oracle")?;
    spec.check_same_shape(oracle_noise, "frame MVDR noise oracle")?;
    let (m, frames, bins) = spec.shape();
    let mut data = vec![C64::new(0.0, 0.0); frames * bins * m];
    let mut rtfs = vec![None; frames * bins];
    for f in 0..bins {
        let batch_s: f64 = (0..frames).map(|t| tf_vector(oracle_speech, t, f).norm_squared()).sum::<f64>() / frames as f64;
        let batch_n: f64 = (0..frames).map(|t| tf_vector(oracle_noise, t, f).norm_squared()).sum::<f64>() / frames as f64;
        let mut phi_s = outer(&tf_vector(oracle_speech, 0, f));
        let mut phi_n = outer(&tf_vector(oracle_noise, 0, f));
        let mut last = {
            let mut e = DVector::<C64>::zeros(m);
            e[0] = C64::new(1.0, 0.0);
            e
        };
        for t in 0..frames {
            if t > 0 {
                smooth(&mut phi_s, &tf_vector(oracle_speech, t, f), lambda);
                smooth(&mut phi_n, &tf_vector(oracle_noise, t, f), lambda);
            }
            let active = trace_re(&phi_s) > 1e-10 * batch_s && trace_re(&phi_n) > 1e-10 * batch_n && batch_s > 0.0 && batch_n > 0.0;
            if active {
                match rtf_from_covariance(&phi_s, f) {
                    Ok((c, _)) => {
                        last = mvdr_vector(&phi_n, &c, loading, f).map_err(|e| e.at_frame(t))?;
                        rtfs[t * bins + f] = Some(c);
                    }
                    Err(Error::SingularRtf { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            let start = (t * bins + f) * m;
            data[start..start + m].copy_from_slice(last.as_slice());
        }
    }
    Ok(FrameMvdr { weights: BeamformerWeights { frames: Some(frames), bins, channels: m, data }, rtfs })
}

/// `out_tf = sum_m conj(w_m) X_m`; time-invariant weights are broadcast.
pub fn apply_beamformer(weights: &BeamformerWeights, spec: &MultichannelSpectrogram) -> Result<Spectrogram> {
    let (m, frames, bins) = spec.shape();
    if weights.channels != m || weights.bins != bins {
        return Err(Error::invalid(format!(
            "weights are {} channels x {} bins, spectrogram is {m} x {bins}",
            weights.channels, weights.bins
        )));
    }
    if let Some(wf) = weights.frames {
        if wf != frames {
            return Err(Error::invalid(format!("weights cover {wf} frames, spectrogram has {frames}")));
        }
    }
    let mut out = Spectrogram::zeros(frames, bins);
    for t in 0..frames {
        for f in 0..bins {
            let w = weights.at(t, f);
            let mut acc = C64::new(0.0, 0.0);
            for (ch, wm) in w.iter().enumerate() {
                acc += wm.conj() * spec.get(ch, t, f);
            }
            out.set(t, f, acc);
        }
    }
    Ok(out)
}

/// Angle/frequency grid for a far-field beampattern.
#[derive(Debug, Clone, PartialEq)]
pub struct BeampatternGrid {
    pub angles_rad: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    /// Frequency spacing of the weight bins, `sample_rate / fft_len`.
    pub bin_spacing_hz: f64,
    pub speed_of_sound: f64,
    /// Frame whose weights are analysed (ignored for time-invariant weights).
    pub frame: usize,
}

/// `B(theta, f) = 20 log10 |w_f^H d(theta, f)|`, rows indexed by angle and
/// columns by frequency. Each frequency uses the nearest weight bin.
pub fn beampattern(weights: &BeamformerWeights, array: &ArrayGeometry, grid: &BeampatternGrid) -> Result<Vec<Vec<f64>>> {
    if weights.channels != array.num_mics() {
        return Err(Error::invalid("weights and array have different channel counts"));
    }
    if !(grid.bin_spacing_hz > 0.0) {
        return Err(Error::invalid("bin spacing must be positive"));
    }
    if let Some(frames) = weights.frames {
        if grid.frame >= frames {
            return Err(Error::invalid(format!("frame {} out of range for {frames} frames", grid.frame)));
        }
    }
    let bin_of = |hz: f64| -> Result<usize> {
        let k = libm::round(hz / grid.bin_spacing_hz);
        if !(k >= 0.0) || k as usize >= weights.bins {
            return Err(Error::invalid(format!("frequency {hz} Hz has no weight bin")));
        }
        Ok(k as usize)
    };
    let bins = grid.freqs_hz.iter().map(|&hz| bin_of(hz)).collect::<Result<Vec<_>>>()?;
    Ok(grid
        .angles_rad
        .iter()
        .map(|&theta| {
            grid.freqs_hz
                .iter()
                .zip(&bins)
                .map(|(&hz, &k)| {
                    let d = steering_vector(array, theta, hz, grid.speed_of_sound);
                    let w = weights.at(grid.frame, k);
                    let resp: C64 = w.iter().zip(&d).map(|(wm, dm)| wm.conj() * dm).sum();
                    20.0 * libm::log10(resp.norm().max(1e-12))
                })
                .collect()
        })
        .collect())
}
