//! High-order Taylor refinement of a beamformed spectrum.
//!
//! With per-channel filter functions `G_m` and a correction `δ_m` that would
//! cancel the interference ahead of filtering, the clean estimate is the
//! Taylor expansion of `Σ_m G_m(X_m + δ_m)` around the mixture:
//!
//! ```text
//! S̃ = S̃₀ + Σ_{q≥1} T(q) / q!,   T(q) = Σ_m G_m^(q)(X_m) δ_m^q
//! ```
//!
//! Terms are generated by the order recursion
//! `T(q+1) = q·T(q) + Σ_m δ_m ∂T(q)/∂X_m` with `∂δ_m/∂X_m = -1`, where the
//! contraction on the right is delegated to a [`DerivativeOperator`].
//! Complex derivatives are taken along the real component; every test
//! function provided here is holomorphic, so this is the complex derivative.

use crate::beamforming::{apply_beamformer, BeamformerWeights};
use crate::prelude::*;
use crate::signal::{compress_power, MultichannelSpectrogram, Spectrogram};
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};

/// Power-law compression applied to spectra inside the loss.
pub const DEFAULT_LOSS_COMPRESSION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorTerm {
    pub order: usize,
    pub value: Spectrogram,
}

impl TaylorTerm {
    pub fn new(order: usize, value: Spectrogram) -> Result<Self> {
        if value.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid(format!("Taylor term of order {order} has non-finite entries")));
        }
        Ok(TaylorTerm { order, value })
    }
}

/// Per-channel additive correction `δ`, shaped like the mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTerm {
    pub delta: MultichannelSpectrogram,
}

/// Oracle correction `δ = S_direct − X`, i.e. minus the interference.
pub fn oracle_correction(mixture: &MultichannelSpectrogram, direct_speech: &MultichannelSpectrogram) -> Result<CorrectionTerm> {
    Ok(CorrectionTerm { delta: direct_speech.sub(mixture)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// Analytic `Σ_m δ_m ∂T(q)/∂X_m`; makes the recursion exact.
    #[default]
    Exact,
    /// `Σ_m ∂T(q)/∂X_m` without the `δ` factor, as the recursion is usually
    /// written for a learned operator. Not exact for analytic oracles.
    Literal,
    FiniteDifference,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaylorConfig {
    /// Number of high-order terms superimposed on `S̃₀`.
    #[serde(rename = "q")]
    pub order_q: usize,
    pub operator: OperatorKind,
    pub factorial_scaling: bool,
}

impl Default for TaylorConfig {
    fn default() -> Self {
        TaylorConfig { order_q: 3, operator: OperatorKind::Exact, factorial_scaling: true }
    }
}

/// Inputs shared by every recursion step.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorContext {
    pub mixture: MultichannelSpectrogram,
    /// Encoded mixture features `F₀`: the compressed reference channel.
    pub features: Spectrogram,
    pub correction: Option<CorrectionTerm>,
}

impl OperatorContext {
    pub fn new(mixture: MultichannelSpectrogram, correction: Option<CorrectionTerm>) -> Result<Self> {
        if let Some(c) = &correction {
            if c.delta.shape() != mixture.shape() {
                return Err(Error::invalid(format!(
                    "correction has shape {:?}, mixture has {:?}",
                    c.delta.shape(),
                    mixture.shape()
                )));
            }
        }
        let features = compress_power(&mixture.channel(0), DEFAULT_LOSS_COMPRESSION)?;
        Ok(OperatorContext { mixture, features, correction })
    }

    fn delta(&self) -> Result<&MultichannelSpectrogram> {
        self.correction
            .as_ref()
            .map(|c| &c.delta)
            .ok_or_else(|| Error::Operator("this operator needs an oracle correction δ".into()))
    }
}

/// The `order`-th derivative of channel function `G_m` at `x`, for bin
/// `(t, f)`.
pub trait ChannelFunction {
    fn derivative(&self, m: usize, t: usize, f: usize, order: usize, x: C64) -> C64;
}

/// `G_m(X) = conj(w_m) X`, the linear spatial filter.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFilter {
    pub weights: BeamformerWeights,
}

impl ChannelFunction for LinearFilter {
    fn derivative(&self, m: usize, t: usize, f: usize, order: usize, x: C64) -> C64 {
        let w = self.weights.at(t, f)[m].conj();
        match order {
            0 => w * x,
            1 => w,
            _ => C64::new(0.0, 0.0),
        }
    }
}

/// The same polynomial `G(x) = Σ_k a_k x^k` on every channel and bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<C64>,
}

impl Polynomial {
    pub fn real(coeffs: &[f64]) -> Self {
        Polynomial { coeffs: coeffs.iter().map(|&a| C64::new(a, 0.0)).collect() }
    }
}

impl ChannelFunction for Polynomial {
    fn derivative(&self, _m: usize, _t: usize, _f: usize, order: usize, x: C64) -> C64 {
        // Horner on the differentiated coefficients.
        let mut acc = C64::new(0.0, 0.0);
        for k in (order..self.coeffs.len()).rev() {
            let falling: f64 = ((k - order + 1)..=k).map(|j| j as f64).product();
            acc = acc * x + self.coeffs[k] * falling;
        }
        acc
    }
}

/// `Σ_m G_m(X_m)`, the zeroth-order output of an arbitrary filter function.
pub fn evaluate_function(func: &dyn ChannelFunction, mixture: &MultichannelSpectrogram) -> Spectrogram {
    let (mics, frames, bins) = mixture.shape();
    let mut out = Spectrogram::zeros(frames, bins);
    for t in 0..frames {
        for f in 0..bins {
            let v = (0..mics).map(|m| func.derivative(m, t, f, 0, mixture.get(m, t, f))).sum();
            out.set(t, f, v);
        }
    }
    out
}

/// `Σ_m G_m^(q)(X_m) δ_m^q` evaluated directly from the derivatives.
pub fn direct_term(func: &dyn ChannelFunction, ctx: &OperatorContext, order: usize) -> Result<Spectrogram> {
    let delta = ctx.delta()?;
    let (mics, frames, bins) = ctx.mixture.shape();
    let mut out = Spectrogram::zeros(frames, bins);
    for t in 0..frames {
        for f in 0..bins {
            let v = (0..mics)
                .map(|m| func.derivative(m, t, f, order, ctx.mixture.get(m, t, f)) * delta.get(m, t, f).powu(order as u32))
                .sum();
            out.set(t, f, v);
        }
    }
    Ok(out)
}

pub trait DerivativeOperator {
    /// Estimate of `Σ_m δ_m ∂T(q)/∂X_m` for the given term.
    fn step(&self, term: &TaylorTerm, ctx: &OperatorContext) -> Result<Spectrogram>;
}

fn check_term_shape(term: &TaylorTerm, ctx: &OperatorContext) -> Result<()> {
    let (_, frames, bins) = ctx.mixture.shape();
    if term.value.shape() != (frames, bins) {
        return Err(Error::invalid(format!(
            "term of order {} is {:?}, mixture frames/bins are {:?}",
            term.order,
            term.value.shape(),
            (frames, bins)
        )));
    }
    Ok(())
}

// ∂T(q)/∂X_m = G^(q+1) δ^q − q G^(q) δ^(q−1); the element below is that
// derivative times δ^extra, so extra = 1 gives the contraction.
fn analytic_derivative(func: &dyn ChannelFunction, ctx: &OperatorContext, q: usize, with_delta: bool) -> Result<Spectrogram> {
    let delta = ctx.delta()?;
    let (mics, frames, bins) = ctx.mixture.shape();
    let mut out = Spectrogram::zeros(frames, bins);
    for t in 0..frames {
        for f in 0..bins {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..mics {
                let x = ctx.mixture.get(m, t, f);
                let d = delta.get(m, t, f);
                let mut v = func.derivative(m, t, f, q + 1, x) * d.powu(q as u32);
                if q > 0 {
                    v -= func.derivative(m, t, f, q, x) * d.powu(q as u32 - 1) * q as f64;
                }
                acc += if with_delta { v * d } else { v };
            }
            out.set(t, f, acc);
        }
    }
    Ok(out)
}

/// Closed-form contraction for a known filter function and oracle `δ`.
pub struct ExactContraction<G> {
    pub function: G,
}

impl<G: ChannelFunction> DerivativeOperator for ExactContraction<G> {
    fn step(&self, term: &TaylorTerm, ctx: &OperatorContext) -> Result<Spectrogram> {
        check_term_shape(term, ctx)?;
        analytic_derivative(&self.function, ctx, term.order, true)
    }
}

/// `Σ_m ∂T(q)/∂X_m` with no `δ` factor.
pub struct LiteralForm<G> {
    pub function: G,
}

impl<G: ChannelFunction> DerivativeOperator for LiteralForm<G> {
    fn step(&self, term: &TaylorTerm, ctx: &OperatorContext) -> Result<Spectrogram> {
        check_term_shape(term, ctx)?;
        analytic_derivative(&self.function, ctx, term.order, false)
    }
}

/// Central differences of `T(q)` as a function of each `X_m`, holding the
/// target `X + δ` fixed so that `δ` moves with `-1` slope.
pub struct FiniteDifference<G> {
    pub function: G,
    pub step: f64,
    pub richardson: bool,
}

impl<G: ChannelFunction> FiniteDifference<G> {
    pub fn new(function: G, step: f64) -> Self {
        FiniteDifference { function, step, richardson: true }
    }

    fn term_at(&self, m: usize, t: usize, f: usize, q: usize, x: C64, target: C64) -> C64 {
        self.function.derivative(m, t, f, q, x) * (target - x).powu(q as u32)
    }

    #[allow(clippy::too_many_arguments)]
    fn central(&self, m: usize, t: usize, f: usize, q: usize, x: C64, target: C64, h: f64) -> C64 {
        let dh = C64::new(h, 0.0);
        (self.term_at(m, t, f, q, x + dh, target) - self.term_at(m, t, f, q, x - dh, target)) / (2.0 * h)
    }
}

impl<G: ChannelFunction> DerivativeOperator for FiniteDifference<G> {
    fn step(&self, term: &TaylorTerm, ctx: &OperatorContext) -> Result<Spectrogram> {
        check_term_shape(term, ctx)?;
        if !(self.step > 0.0) {
            return Err(Error::Operator(format!("finite-difference step must be positive, got {}", self.step)));
        }
        let delta = ctx.delta()?;
        let q = term.order;
        let (mics, frames, bins) = ctx.mixture.shape();
        let mut out = Spectrogram::zeros(frames, bins);
        for t in 0..frames {
            for f in 0..bins {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..mics {
                    let x = ctx.mixture.get(m, t, f);
                    let d = delta.get(m, t, f);
                    let target = x + d;
                    let coarse = self.central(m, t, f, q, x, target, self.step);
                    let deriv = if self.richardson {
                        let fine = self.central(m, t, f, q, x, target, self.step / 2.0);
                        (fine * 4.0 - coarse) / 3.0
                    } else {
                        coarse
                    };
                    acc += d * deriv;
                }
                out.set(t, f, acc);
            }
        }
        Ok(out)
    }
}

/// Deserialized per-bin affine operator: `a_f·T(q) + b_f·F₀ + c_f`.
///
/// Stands in for a trained network; only the tensor contract is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalOperator {
    pub term_gain: Vec<C64>,
    pub feature_gain: Vec<C64>,
    pub bias: Vec<C64>,
}

impl ExternalOperator {
    /// An operator that returns zero, so every term after the seed is `q·T(q)`.
    pub fn zero(bins: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); bins];
        ExternalOperator { term_gain: z.clone(), feature_gain: z.clone(), bias: z }
    }
}

impl DerivativeOperator for ExternalOperator {
    fn step(&self, term: &TaylorTerm, ctx: &OperatorContext) -> Result<Spectrogram> {
        check_term_shape(term, ctx)?;
        let bins = term.value.bins();
        if self.term_gain.len() != bins || self.feature_gain.len() != bins || self.bias.len() != bins {
            return Err(Error::Operator(format!("external operator parameters do not cover {bins} bins")));
        }
        let mut out = Spectrogram::zeros(term.value.frames(), bins);
        for t in 0..term.value.frames() {
            for f in 0..bins {
                let v = self.term_gain[f] * term.value.get(t, f) + self.feature_gain[f] * ctx.features.get(t, f) + self.bias[f];
                out.set(t, f, v);
            }
        }
        Ok(out)
    }
}

/// Zeroth-order output `S̃₀ = w^H X`.
pub fn zeroth_order(spec: &MultichannelSpectrogram, weights: &BeamformerWeights) -> Result<Spectrogram> {
    apply_beamformer(weights, spec)
}

/// First term, from the recursion at `q = 0` where `T(0) = S̃₀` carries no
/// `δ` dependence: `T(1) = Σ_m δ_m ∂S̃₀/∂X_m`.
pub fn seed_term(s0: &Spectrogram, op: &dyn DerivativeOperator, ctx: &OperatorContext) -> Result<TaylorTerm> {
    let zeroth = TaylorTerm::new(0, s0.clone())?;
    TaylorTerm::new(1, op.step(&zeroth, ctx)?)
}

/// `T(q+1) = q·T(q) + op.step(T(q))`.
pub fn taylor_step(term: &TaylorTerm, op: &dyn DerivativeOperator, ctx: &OperatorContext) -> Result<TaylorTerm> {
    if term.order == 0 {
        return Err(Error::invalid("taylor_step needs a term of order at least 1; use seed_term for order 0"));
    }
    let contraction = op.step(term, ctx)?;
    let next = term.value.scale(term.order as f64).add(&contraction)?;
    TaylorTerm::new(term.order + 1, next)
}

/// `T(1) .. T(Q)` by the recursion from `S̃₀`.
pub fn generate_terms(s0: &Spectrogram, op: &dyn DerivativeOperator, ctx: &OperatorContext, order_q: usize) -> Result<Vec<TaylorTerm>> {
    let mut terms = Vec::with_capacity(order_q);
    if order_q == 0 {
        return Ok(terms);
    }
    terms.push(seed_term(s0, op, ctx)?);
    while terms.len() < order_q {
        let next = taylor_step(terms.last().expect("non-empty"), op, ctx)?;
        terms.push(next);
    }
    Ok(terms)
}

fn factorial(q: usize) -> f64 {
    (1..=q).map(|k| k as f64).product()
}

/// `S̃ = S̃₀ + Σ_q T(q)/q!` (or without `1/q!` when factorial scaling is off).
pub fn superimpose(s0: &Spectrogram, terms: &[TaylorTerm], cfg: &TaylorConfig) -> Result<Spectrogram> {
    let mut seen = vec![false; cfg.order_q + 1];
    for term in terms {
        if term.order == 0 || term.order > cfg.order_q {
            return Err(Error::invalid(format!("term order {} outside 1..={}", term.order, cfg.order_q)));
        }
        if seen[term.order] {
            return Err(Error::invalid(format!("duplicate term of order {}", term.order)));
        }
        seen[term.order] = true;
    }
    if let Some(q) = (1..=cfg.order_q).find(|&q| !seen[q]) {
        return Err(Error::invalid(format!("missing term of order {q}")));
    }
    let mut out = s0.clone();
    for term in terms {
        let scale = if cfg.factorial_scaling { 1.0 / factorial(term.order) } else { 1.0 };
        out = out.add(&term.value.scale(scale))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub zeroth: Spectrogram,
    pub terms: Vec<TaylorTerm>,
    pub output: Spectrogram,
}

/// Generate `cfg.order_q` terms from `S̃₀` and superimpose them.
pub fn run_pipeline(s0: &Spectrogram, op: &dyn DerivativeOperator, ctx: &OperatorContext, cfg: &TaylorConfig) -> Result<PipelineOutput> {
    let terms = generate_terms(s0, op, ctx, cfg.order_q)?;
    let output = superimpose(s0, &terms, cfg)?;
    Ok(PipelineOutput { zeroth: s0.clone(), terms, output })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::invalid(format!("loss weights must be finite and non-negative, got {self:?}")));
        }
        Ok(())
    }
}

/// Mean over bins of squared real, imaginary and magnitude errors of the
/// power-compressed spectra.
pub fn ri_mag_loss(est: &Spectrogram, reference: &Spectrogram, compression: f64) -> Result<f64> {
    est.check_same_shape(reference, "loss inputs")?;
    let a = compress_power(est, compression)?;
    let b = compress_power(reference, compression)?;
    let n = a.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| {
            let d = x - y;
            let dm = x.norm() - y.norm();
            d.re * d.re + d.im * d.im + dm * dm
        })
        .sum();
    Ok(sum / n as f64)
}

/// `α·L(S̃₀, bf_label) + β·L(S̃, target)` at the default compression.
pub fn multiobjective_loss(
    s0: &Spectrogram,
    s_final: &Spectrogram,
    bf_label: &Spectrogram,
    target: &Spectrogram,
    weights: &LossWeights,
) -> Result<f64> {
    multiobjective_loss_with(s0, s_final, bf_label, target, weights, DEFAULT_LOSS_COMPRESSION)
}

pub fn multiobjective_loss_with(
    s0: &Spectrogram,
    s_final: &Spectrogram,
    bf_label: &Spectrogram,
    target: &Spectrogram,
    weights: &LossWeights,
    compression: f64,
) -> Result<f64> {
    weights.validate()?;
    let first = ri_mag_loss(s0, bf_label, compression)?;
    let second = ri_mag_loss(s_final, target, compression)?;
    Ok(weights.alpha * first + weights.beta * second)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: C64) -> Spectrogram {
        Spectrogram::from_vec(vec![v], 1, 1).unwrap()
    }

    fn scalar_ctx(x: f64, delta: f64) -> OperatorContext {
        let mix = MultichannelSpectrogram::from_channels(vec![scalar(C64::new(x, 0.0))]).unwrap();
        let d = MultichannelSpectrogram::from_channels(vec![scalar(C64::new(delta, 0.0))]).unwrap();
        OperatorContext::new(mix, Some(CorrectionTerm { delta: d })).unwrap()
    }

    fn cubic() -> Polynomial {
        Polynomial::real(&[0.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn polynomial_derivatives() {
        let p = Polynomial::real(&[1.0, 2.0, 3.0]);
        let x = C64::new(2.0, 0.0);
        assert_eq!(p.derivative(0, 0, 0, 0, x).re, 17.0);
        assert_eq!(p.derivative(0, 0, 0, 1, x).re, 14.0);
        assert_eq!(p.derivative(0, 0, 0, 2, x).re, 6.0);
        assert_eq!(p.derivative(0, 0, 0, 3, x).re, 0.0);
    }

    #[test]
    fn cubic_worked_example() {
        let ctx = scalar_ctx(2.0, 0.1);
        let op = ExactContraction { function: cubic() };
        let s0 = evaluate_function(&op.function, &ctx.mixture);
        let cfg = TaylorConfig { order_q: 3, ..TaylorConfig::default() };
        let out = run_pipeline(&s0, &op, &ctx, &cfg).unwrap();
        let got: Vec<f64> = out.terms.iter().map(|t| t.value.get(0, 0).re).collect();
        for (g, want) in got.iter().zip([1.2, 0.12, 0.006]) {
            assert!((g - want).abs() < 1e-12, "{got:?}");
        }
        assert!((out.output.get(0, 0).re - 9.261).abs() < 1e-12);
    }

    #[test]
    fn literal_form_is_not_exact() {
        let ctx = scalar_ctx(2.0, 0.1);
        let op = LiteralForm { function: cubic() };
        let s0 = evaluate_function(&op.function, &ctx.mixture);
        let terms = generate_terms(&s0, &op, &ctx, 2).unwrap();
        // Seed drops δ: T(1) = G'(x) = 12.
        assert!((terms[0].value.get(0, 0).re - 12.0).abs() < 1e-12);
        assert!((terms[1].value.get(0, 0).re - 0.12).abs() > 1.0);
    }

    #[test]
    fn finite_difference_matches_analytic_step() {
        let ctx = scalar_ctx(2.0, 0.1);
        let exact = ExactContraction { function: cubic() };
        let fd = FiniteDifference::new(cubic(), 1e-4);
        for q in 1..4 {
            let term = TaylorTerm::new(q, direct_term(&cubic(), &ctx, q).unwrap()).unwrap();
            let a = exact.step(&term, &ctx).unwrap().get(0, 0);
            let b = fd.step(&term, &ctx).unwrap().get(0, 0);
            assert!((a - b).norm() <= 1e-5 * a.norm(), "q={q}: {a} vs {b}");
        }
    }

    #[test]
    fn taylor_step_rejects_order_zero() {
        let ctx = scalar_ctx(2.0, 0.1);
        let term = TaylorTerm::new(0, scalar(C64::new(8.0, 0.0))).unwrap();
        let op = ExactContraction { function: cubic() };
        assert!(taylor_step(&term, &op, &ctx).is_err());
    }

    #[test]
    fn missing_delta_is_an_operator_error() {
        let mix = MultichannelSpectrogram::from_channels(vec![scalar(C64::new(1.0, 0.0))]).unwrap();
        let ctx = OperatorContext::new(mix, None).unwrap();
        let op = ExactContraction { function: cubic() };
        let s0 = scalar(C64::new(1.0, 0.0));
        assert!(matches!(seed_term(&s0, &op, &ctx), Err(Error::Operator(_))));
    }

    #[test]
    fn superimpose_checks_orders() {
        let s0 = scalar(C64::new(1.0, 0.0));
        let t = |q| TaylorTerm::new(q, scalar(C64::new(1.0, 0.0))).unwrap();
        let cfg = TaylorConfig { order_q: 2, ..TaylorConfig::default() };
        assert!(superimpose(&s0, &[t(1)], &cfg).is_err());
        assert!(superimpose(&s0, &[t(1), t(1)], &cfg).is_err());
        assert!(superimpose(&s0, &[t(1), t(2), t(3)], &cfg).is_err());
        let out = superimpose(&s0, &[t(2), t(1)], &cfg).unwrap();
        assert!((out.get(0, 0).re - 2.5).abs() < 1e-15);
        let flat = TaylorConfig { factorial_scaling: false, ..cfg };
        assert!((superimpose(&s0, &[t(1), t(2)], &flat).unwrap().get(0, 0).re - 3.0).abs() < 1e-15);
        let none = TaylorConfig { order_q: 0, ..cfg };
        assert_eq!(superimpose(&s0, &[], &none).unwrap(), s0);
    }

    #[test]
    fn linear_chain_vanishes_after_first_term() {
        let w = BeamformerWeights::time_invariant(&[nalgebra::DVector::from_vec(vec![C64::new(0.5, 0.1), C64::new(0.5, -0.1)])]).unwrap();
        let mk = |a: f64, b: f64| MultichannelSpectrogram::from_channels(vec![scalar(C64::new(a, 0.3)), scalar(C64::new(b, -0.2))]).unwrap();
        let mix = mk(1.0, 2.0);
        let delta = mk(-0.4, 0.7);
        let ctx = OperatorContext::new(mix.clone(), Some(CorrectionTerm { delta })).unwrap();
        let op = ExactContraction { function: LinearFilter { weights: w.clone() } };
        let s0 = zeroth_order(&mix, &w).unwrap();
        let terms = generate_terms(&s0, &op, &ctx, 4).unwrap();
        assert!(terms[0].value.get(0, 0).norm() > 0.1);
        for t in &terms[1..] {
            assert!(t.value.get(0, 0).norm() < 1e-12);
        }
    }

    #[test]
    fn external_operator_contract() {
        let ctx = scalar_ctx(2.0, 0.1);
        let op = ExternalOperator { term_gain: vec![C64::new(2.0, 0.0)], feature_gain: vec![C64::new(0.0, 0.0)], bias: vec![C64::new(1.0, 0.0)] };
        let term = TaylorTerm::new(1, scalar(C64::new(3.0, 0.0))).unwrap();
        assert_eq!(op.step(&term, &ctx).unwrap().get(0, 0), C64::new(7.0, 0.0));
        let next = taylor_step(&term, &op, &ctx).unwrap();
        assert_eq!((next.order, next.value.get(0, 0)), (2, C64::new(10.0, 0.0)));
        assert!(ExternalOperator::zero(3).step(&term, &ctx).is_err());
    }

    #[test]
    fn loss_hand_values() {
        let two = scalar(C64::new(2.0, 0.0));
        let one = scalar(C64::new(1.0, 0.0));
        assert!((ri_mag_loss(&two, &one, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(ri_mag_loss(&two, &two, 0.5).unwrap(), 0.0);
        let w = LossWeights::default();
        assert_eq!(multiobjective_loss(&one, &two, &one, &two, &w).unwrap(), 0.0);
        let only_beta = LossWeights { alpha: 0.0, beta: 1.0 };
        let l = multiobjective_loss_with(&two, &two, &one, &one, &only_beta, 1.0).unwrap();
        assert!((l - 2.0).abs() < 1e-15);
        assert!(multiobjective_loss(&one, &one, &one, &one, &LossWeights { alpha: -1.0, beta: 1.0 }).is_err());
    }
}
