//! Shoebox room acoustics: microphone arrays, image-method impulse
//! responses, far-field steering vectors and Schroeder T60 estimation.

use crate::prelude::*;
use crate::signal::StftConfig;
use crate::beamforming::Rtf;
use crate::fft::RealFft;
use crate::{Error, Result, C64};
use core::f64::consts::{LN_10, PI};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub type Point3 = [f64; 3];

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
/// Length of the direct-path segment used for RTFs and direct/tail splits.
pub const DIRECT_PATH_WINDOW_MS: f64 = 2.5;
const MAX_ORDER_CAP: usize = 160;
/// Cutoff of the high-pass applied to the reflected part of each RIR.
pub const DEFAULT_HIGHPASS_HZ: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<Point3>,
}

impl ArrayGeometry {
    pub fn new(mic_positions: Vec<Point3>) -> Result<Self> {
        if mic_positions.is_empty() {
            return Err(Error::invalid("array needs at least one microphone"));
        }
        for i in 0..mic_positions.len() {
            for j in 0..i {
                if distance(&mic_positions[i], &mic_positions[j]) < 1e-9 {
                    return Err(Error::invalid(format!("microphones {j} and {i} coincide")));
                }
            }
        }
        Ok(ArrayGeometry { mic_positions })
    }

    /// Uniform linear array parallel to the x axis, centred on `center`.
    ///
    /// The reference microphone (index 0) sits at the +x end, so a plane
    /// wave from DOA 0 (the +x direction) reaches it first and DOA 90 is
    /// broadside.
    pub fn uniform_linear(num_mics: usize, spacing: f64, center: Point3) -> Result<Self> {
        if num_mics == 0 || !(spacing > 0.0) {
            return Err(Error::invalid("a ULA needs at least one microphone and a positive spacing"));
        }
        let half = (num_mics as f64 - 1.0) / 2.0;
        let positions = (0..num_mics)
            .map(|m| [center[0] + (half - m as f64) * spacing, center[1], center[2]])
            .collect();
        ArrayGeometry::new(positions)
    }

    /// Six microphones with 5 cm spacing.
    pub fn default_ula(center: Point3) -> Self {
        ArrayGeometry::uniform_linear(6, 0.05, center).expect("static geometry is valid")
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn center(&self) -> Point3 {
        let n = self.mic_positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.mic_positions {
            for k in 0..3 {
                c[k] += p[k] / n;
            }
        }
        c
    }

    /// Direction of arrival of a point in the horizontal plane, degrees in
    /// `(-180, 180]`, measured from the +x axis around the array centre.
    pub fn doa_deg(&self, point: &Point3) -> f64 {
        let c = self.center();
        libm::atan2(point[1] - c[1], point[0] - c[0]).to_degrees()
    }
}

pub(crate) fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// How wall reflection coefficients are derived from the target T60.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbsorptionModel {
    /// Reflection coefficient chosen so that the image lattice's own energy
    /// decay, fitted like [`schroeder_t60`], has the target T60.
    #[default]
    Calibrated,
    /// `alpha = 1 - exp(-24 ln10 V / (c S T60))`; always realizable.
    Eyring,
    /// `alpha = 24 ln10 V / (c S T60)`; rejects targets that need `alpha > 1`.
    Sabine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DelayInterpolation {
    /// Round every image delay to the nearest sample.
    #[default]
    Nearest,
    /// Hann-windowed sinc fractional delay with the given odd tap count.
    WindowedSinc { taps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dims: Point3,
    /// Target reverberation time in seconds; `0` means fully absorbing walls.
    pub t60: f64,
    pub source_pos: Point3,
    pub array: ArrayGeometry,
    /// Highest reflection order; `None` picks one from the T60.
    #[serde(default)]
    pub max_order: Option<usize>,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
    pub sample_rate_hz: u32,
    #[serde(default)]
    pub absorption: AbsorptionModel,
    #[serde(default)]
    pub interpolation: DelayInterpolation,
    /// Impulse response length in samples; `None` covers 1.2 x T60.
    #[serde(default)]
    pub rir_len: Option<usize>,
    /// High-pass cutoff for the reflections. All images have positive
    /// amplitude, so without it late arrivals pile up coherently at DC and
    /// the tail decays far slower than the wall absorption implies.
    #[serde(default = "default_highpass")]
    pub highpass_hz: Option<f64>,
}

fn default_highpass() -> Option<f64> {
    Some(DEFAULT_HIGHPASS_HZ)
}

fn default_speed_of_sound() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl RoomSpec {
    pub fn new(dims: Point3, t60: f64, source_pos: Point3, array: ArrayGeometry, sample_rate_hz: u32) -> Self {
        RoomSpec {
            dims,
            t60,
            source_pos,
            array,
            max_order: None,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            sample_rate_hz,
            absorption: AbsorptionModel::default(),
            interpolation: DelayInterpolation::default(),
            rir_len: None,
            highpass_hz: default_highpass(),
        }
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::invalid(format!("dims must be positive, got {:?}", self.dims)));
        }
        if !(self.t60 >= 0.0) || !self.t60.is_finite() {
            return Err(Error::invalid(format!("t60 must be non-negative, got {}", self.t60)));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::invalid("speed_of_sound must be positive"));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::invalid("sample_rate_hz must be positive"));
        }
        if !self.inside(&self.source_pos) {
            return Err(Error::invalid(format!(
                "source_pos {:?} is not strictly inside dims {:?}",
                self.source_pos, self.dims
            )));
        }
        for (m, p) in self.array.mic_positions.iter().enumerate() {
            if !self.inside(p) {
                return Err(Error::invalid(format!(
                    "array.mic_positions[{m}] {p:?} is not strictly inside dims {:?}",
                    self.dims
                )));
            }
        }
        if let DelayInterpolation::WindowedSinc { taps } = self.interpolation {
            if taps % 2 == 0 || taps < 3 {
                return Err(Error::invalid("interpolation.taps must be odd and at least 3"));
            }
        }
        if let Some(fc) = self.highpass_hz {
            if !(fc > 0.0 && fc < self.sample_rate_hz as f64 / 2.0) {
                return Err(Error::invalid(format!("highpass_hz must lie in (0, fs/2), got {fc}")));
            }
        }
        Ok(())
    }

    fn inside(&self, p: &Point3) -> bool {
        p.iter().zip(&self.dims).all(|(x, d)| *x > 0.0 && x < d)
    }

    /// Uniform wall absorption implied by the target T60.
    pub fn absorption_coefficient(&self) -> Result<f64> {
        if self.t60 == 0.0 {
            return Ok(1.0);
        }
        let sabine = 24.0 * LN_10 * self.volume() / (self.speed_of_sound * self.surface() * self.t60);
        match self.absorption {
            AbsorptionModel::Sabine if sabine > 1.0 => Err(Error::invalid(format!(
                "t60 {} s is too short for a {:?} m room (Sabine absorption {sabine:.3} > 1)",
                self.t60, self.dims
            ))),
            AbsorptionModel::Sabine => Ok(sabine),
            AbsorptionModel::Eyring => Ok(1.0 - libm::exp(-sabine)),
            AbsorptionModel::Calibrated => {
                let beta = self.reflection_coefficient()?;
                Ok(1.0 - beta * beta)
            }
        }
    }

    pub fn reflection_coefficient(&self) -> Result<f64> {
        if self.absorption == AbsorptionModel::Calibrated && self.t60 > 0.0 {
            let rate = lattice_decay_constant(&self.dims) / self.t60;
            return Ok(libm::exp(-rate / (2.0 * self.speed_of_sound)));
        }
        Ok((1.0 - self.absorption_coefficient()?).max(0.0).sqrt())
    }

    /// Reflection order that reaches every image within 1.2 x T60 of
    /// propagation, capped at 160.
    pub fn effective_max_order(&self) -> usize {
        if let Some(order) = self.max_order {
            return order;
        }
        if self.t60 == 0.0 {
            return 0;
        }
        // An image at distance r along unit direction u has about
        // sum_k r |u_k| / L_k reflections; the worst direction gives
        // r * sqrt(sum_k 1 / L_k^2).
        let reach = self.speed_of_sound * 1.2 * self.t60;
        let density: f64 = self.dims.iter().map(|l| 1.0 / (l * l)).sum::<f64>().sqrt();
        ((reach * density).ceil() as usize).min(MAX_ORDER_CAP)
    }

    fn default_len(&self) -> usize {
        let fs = self.sample_rate_hz as f64;
        let direct = self
            .array
            .mic_positions
            .iter()
            .map(|p| distance(p, &self.source_pos) * fs / self.speed_of_sound)
            .fold(0.0, f64::max);
        let guard = match self.interpolation {
            DelayInterpolation::Nearest => 1,
            DelayInterpolation::WindowedSinc { taps } => taps / 2 + 1,
        };
        let tail = libm::ceil(1.2 * self.t60 * fs) as usize;
        tail.max(direct.ceil() as usize + guard + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rir {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate_hz: u32,
    /// Geometric direct-path delay of each channel, rounded to samples.
    pub direct_path_delays: Vec<usize>,
}

impl Rir {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().flatten().map(|x| x * x).sum()
    }
}

/// Coordinate of the `i`-th image of `s` along an axis of length `l`;
/// `a * T60` for the image lattice of a room.
///
/// An image at distance `r` along direction `u` has about
/// `r * g(u)` reflections, `g(u) = sum_k |u_k| / L_k`, so with reflection
/// coefficient `beta` the energy arriving at time `t` is proportional to the
/// sphere average of `exp(-a g(u) t)`, `a = 2 c ln(1 / beta)`. Its backward
/// integral is the average of `exp(-a g t) / g`, a function of `a t` only,
/// so the fitted T60 is `K / a` for a shape constant `K` computed here.
fn lattice_decay_constant(dims: &Point3) -> f64 {
    // Equal-area midpoint grid on one octant (|u| symmetry).
    const N: usize = 64;
    let mut g = Vec::with_capacity(N * N);
    for iz in 0..N {
        let z = (iz as f64 + 0.5) / N as f64;
        let rho = (1.0 - z * z).sqrt();
        for ip in 0..N {
            let phi = (ip as f64 + 0.5) / N as f64 * (PI / 2.0);
            g.push(rho * libm::cos(phi) / dims[0] + rho * libm::sin(phi) / dims[1] + z / dims[2]);
        }
    }
    let edc = |x: f64| g.iter().map(|&gk| libm::exp(-gk * x) / gk).sum::<f64>();
    let total = edc(0.0);
    let db = |x: f64| 10.0 * libm::log10(edc(x) / total);
    // Bracket the -25 dB point, then fit the line on a uniform grid.
    let mut hi = 1.0;
    while db(hi) > -25.0 {
        hi *= 2.0;
    }
    let steps = 4000;
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..=steps {
        let x = hi * i as f64 / steps as f64;
        let y = db(x);
        if y < -25.0 {
            break;
        }
        if y <= -5.0 {
            n += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    -60.0 / slope
}

/// `|i|` is the number of wall reflections on that axis.
fn image_coordinate(i: i64, l: f64, s: f64) -> f64 {
    if i.rem_euclid(2) == 0 {
        i as f64 * l + s
    } else {
        (i + 1) as f64 * l - s
    }
}

/// Allen-Berkley image-source simulation with uniform wall reflection.
pub fn simulate_rir(room: &RoomSpec) -> Result<Rir> {
    room.validate()?;
    let beta = room.reflection_coefficient()?;
    let order = room.effective_max_order() as i64;
    let fs = room.sample_rate_hz as f64;
    let c = room.speed_of_sound;
    let len = room.rir_len.unwrap_or_else(|| room.default_len());
    let mics = &room.array.mic_positions;
    let mut channels = vec![vec![0.0; len]; mics.len()];
    let mut reflected = vec![vec![0.0; len]; mics.len()];
    // Images farther than this from the array centre arrive after the end.
    let centre = room.array.center();
    let spread = mics.iter().map(|m| distance(m, &centre)).fold(0.0, f64::max);
    let reach = (len as f64 + 1.0) * c / fs + spread + 1.0;

    let sinc = match room.interpolation {
        DelayInterpolation::Nearest => None,
        DelayInterpolation::WindowedSinc { taps } => Some(taps / 2),
    };
    let mut beta_pow = vec![1.0; order as usize + 1];
    for k in 1..beta_pow.len() {
        beta_pow[k] = beta_pow[k - 1] * beta;
    }

    let [lx, ly, lz] = room.dims;
    let [sx, sy, sz] = room.source_pos;
    for i in -order..=order {
        let x = image_coordinate(i, lx, sx);
        let rem_i = order - i.abs();
        for j in -rem_i..=rem_i {
            let y = image_coordinate(j, ly, sy);
            let rem_j = rem_i - j.abs();
            for k in -rem_j..=rem_j {
                let reflections = (i.abs() + j.abs() + k.abs()) as usize;
                let gain = beta_pow[reflections];
                if gain == 0.0 {
                    continue;
                }
                let z = image_coordinate(k, lz, sz);
                let image = [x, y, z];
                if reflections > 0 && distance(&image, &centre) > reach {
                    continue;
                }
                let target = if reflections == 0 { &mut channels } else { &mut reflected };
                for (h, mic) in target.iter_mut().zip(mics) {
                    let r = distance(&image, mic);
                    let delay = r * fs / c;
                    let amp = gain / (4.0 * PI * r);
                    deposit(h, delay, amp, sinc);
                }
            }
        }
    }

    for (h, r) in channels.iter_mut().zip(&mut reflected) {
        if let Some(fc) = room.highpass_hz {
            highpass(r, fc, fs);
        }
        for (a, b) in h.iter_mut().zip(r.iter()) {
            *a += b;
        }
    }

    let direct_path_delays = mics
        .iter()
        .map(|m| libm::round(distance(m, &room.source_pos) * fs / c) as usize)
        .collect();
    Ok(Rir { channels, sample_rate_hz: room.sample_rate_hz, direct_path_delays })
}

/// Second-order DC-blocking filter of Allen and Berkley.
fn highpass(x: &mut [f64], cutoff_hz: f64, fs: f64) {
    let w = 2.0 * PI * cutoff_hz / fs;
    let r1 = libm::exp(-w);
    let b1 = 2.0 * r1 * libm::cos(w);
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in x.iter_mut() {
        let x0 = *v;
        let y0 = b1 * y1 + b2 * y2 + x0 + a1 * x1 + r1 * x2;
        *v = y0;
        x2 = x1;
        x1 = x0;
        y2 = y1;
        y1 = y0;
    }
}

fn deposit(h: &mut [f64], delay: f64, amp: f64, sinc_half: Option<usize>) {
    match sinc_half {
        None => {
            let n = libm::round(delay) as usize;
            if n < h.len() {
                h[n] += amp;
            }
        }
        Some(half) => {
            let centre = libm::floor(delay) as i64;
            let half_f = half as f64 + 1.0;
            for n in centre - half as i64..=centre + half as i64 + 1 {
                if n < 0 || n as usize >= h.len() {
                    continue;
                }
                let u = n as f64 - delay;
                if u.abs() >= half_f {
                    continue;
                }
                let window = 0.5 * (1.0 + libm::cos(PI * u / half_f));
                let s = if u == 0.0 { 1.0 } else { libm::sin(PI * u) / (PI * u) };
                h[n as usize] += amp * s * window;
            }
        }
    }
}

/// Index of the earliest strong peak: the first sample reaching half the
/// channel maximum, refined to the local maximum that follows it.
pub fn direct_peak_index(h: &[f64], search: usize) -> Option<usize> {
    let max = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 || !max.is_finite() {
        return None;
    }
    let first = h.iter().position(|x| x.abs() >= 0.5 * max)?;
    let end = (first + search + 1).min(h.len());
    let mut best = first;
    for n in first..end {
        if h[n].abs() > h[best].abs() {
            best = n;
        }
    }
    Some(best)
}

/// Reverberation time of one impulse response by Schroeder backward
/// integration: least-squares line over the -5..-25 dB span of the energy
/// decay curve, extrapolated to 60 dB.
pub fn schroeder_t60(h: &[f64], sample_rate_hz: u32) -> Result<f64> {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for n in (0..h.len()).rev() {
        acc += h[n] * h[n];
        edc[n] = acc;
    }
    let total = acc;
    if !(total > 0.0) {
        return Err(Error::EstimationFailed("impulse response has no energy".into()));
    }
    let fs = sample_rate_hz as f64;
    let (mut n, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut reached_floor = false;
    let (mut first, mut last) = (usize::MAX, 0usize);
    for (i, &e) in edc.iter().enumerate() {
        if e <= 0.0 {
            break;
        }
        let db = 10.0 * libm::log10(e / total);
        if db < -25.0 {
            reached_floor = true;
            break;
        }
        if db <= -5.0 {
            let t = i as f64 / fs;
            n += 1.0;
            st += t;
            sy += db;
            stt += t * t;
            sty += t * db;
            first = first.min(i);
            last = i;
        }
    }
    if !reached_floor || n < 3.0 || last <= first + 1 {
        return Err(Error::EstimationFailed(
            "energy decay curve does not cover the -5 to -25 dB span".into(),
        ));
    }
    let slope = (n * sty - st * sy) / (n * stt - st * st);
    if !(slope < 0.0) {
        return Err(Error::EstimationFailed("energy decay curve is not decaying".into()));
    }
    Ok(-60.0 / slope)
}

/// Mean Schroeder T60 over the channels of a multichannel RIR.
pub fn estimate_t60(rir: &Rir) -> Result<f64> {
    if rir.channels.is_empty() {
        return Err(Error::EstimationFailed("impulse response has no channels".into()));
    }
    let mut sum = 0.0;
    for h in &rir.channels {
        sum += schroeder_t60(h, rir.sample_rate_hz)?;
    }
    Ok(sum / rir.channels.len() as f64)
}

/// Far-field plane-wave steering vector for a horizontal DOA `theta`
/// (radians from +x). Element `m` is `exp(-j 2 pi f tau_m)` with `tau_m`
/// the arrival delay relative to microphone 0, so element 0 is exactly 1.
pub fn steering_vector(array: &ArrayGeometry, theta: f64, freq: f64, c: f64) -> Vec<C64> {
    let u = [libm::cos(theta), libm::sin(theta), 0.0];
    let p0 = array.mic_positions[0];
    array
        .mic_positions
        .iter()
        .enumerate()
        .map(|(m, p)| {
            if m == 0 {
                return C64::new(1.0, 0.0);
            }
            let proj = (0..3).map(|k| (p[k] - p0[k]) * u[k]).sum::<f64>();
            let tau = -proj / c;
            C64::from_polar(1.0, -2.0 * PI * freq * tau)
        })
        .collect()
}

/// RTF of the direct path: the transfer function of a 2.5 ms segment
/// around each channel's earliest peak, divided by the reference channel's.
///
/// All channels are cut from one common fft_len-long span so their
/// relative delays survive the transform.
pub fn direct_path_rtf(rir: &Rir, cfg: &StftConfig) -> Result<Rtf> {
    cfg.validate()?;
    if rir.channels.is_empty() {
        return Err(Error::invalid("impulse response has no channels"));
    }
    let half = libm::round(DIRECT_PATH_WINDOW_MS * 1e-3 * rir.sample_rate_hz as f64 / 2.0) as usize;
    let peaks = rir
        .channels
        .iter()
        .enumerate()
        .map(|(m, h)| {
            direct_peak_index(h, 2 * half)
                .ok_or_else(|| Error::invalid(format!("channel {m} has no direct-path peak")))
        })
        .collect::<Result<Vec<_>>>()?;
    let start = peaks.iter().min().unwrap().saturating_sub(half);
    let stop = peaks.iter().max().unwrap() + half;
    if stop - start >= cfg.fft_len {
        return Err(Error::invalid(format!(
            "direct-path peaks span {} samples, more than the {}-point FFT",
            stop - start,
            cfg.fft_len
        )));
    }
    let fft = RealFft::new(cfg.fft_len);
    let spectra = rir
        .channels
        .iter()
        .zip(&peaks)
        .map(|(h, &p)| {
            let lo = p.saturating_sub(half);
            let hi = (p + half).min(h.len() - 1);
            let mut seg = vec![0.0; fft.len()];
            seg[lo - start..=hi - start].copy_from_slice(&h[lo..=hi]);
            let mut out = vec![C64::new(0.0, 0.0); fft.bins()];
            fft.forward(&seg, &mut out);
            out
        })
        .collect::<Vec<_>>();
    let reference = &spectra[0];
    let floor = 1e-10 * reference.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut vectors = Vec::with_capacity(fft.bins());
    for k in 0..fft.bins() {
        let r = reference[k];
        if !(r.norm() > floor) {
            return Err(Error::SingularRtf { bin: k });
        }
        let mut v = DVector::from_iterator(spectra.len(), spectra.iter().map(|s| s[k] / r));
        v[0] = C64::new(1.0, 0.0);
        vectors.push(v);
    }
    Ok(Rtf::new(vectors))
}
