//! Real-input transforms of a fixed length.
//!
//! With `std` the transforms are planned by rustfft; without it a direct
//! DFT over a precomputed twiddle table is used.

use crate::prelude::*;
use crate::C64;

#[cfg(feature = "std")]
use alloc::sync::Arc;
#[cfg(feature = "std")]
use rustfft::{Fft, FftPlanner};

pub(crate) struct RealFft {
    len: usize,
    #[cfg(feature = "std")]
    forward: Arc<dyn Fft<f64>>,
    #[cfg(feature = "std")]
    inverse: Arc<dyn Fft<f64>>,
    #[cfg(not(feature = "std"))]
    twiddles: Vec<C64>,
}

impl RealFft {
    pub(crate) fn new(len: usize) -> Self {
        #[cfg(feature = "std")]
        {
            let mut planner = FftPlanner::new();
            RealFft {
                len,
                forward: planner.plan_fft_forward(len),
                inverse: planner.plan_fft_inverse(len),
            }
        }
        #[cfg(not(feature = "std"))]
        {
            let twiddles = (0..len)
                .map(|k| {
                    let phi = -2.0 * core::f64::consts::PI * k as f64 / len as f64;
                    C64::new(phi.cos(), phi.sin())
                })
                .collect();
            RealFft { len, twiddles }
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn bins(&self) -> usize {
        self.len / 2 + 1
    }

    /// One-sided forward transform. `input` is zero-padded to the transform
    /// length; `out` must hold `len / 2 + 1` bins.
    pub(crate) fn forward(&self, input: &[f64], out: &mut [C64]) {
        debug_assert!(input.len() <= self.len);
        debug_assert_eq!(out.len(), self.bins());
        let mut buf: Vec<C64> = vec![C64::new(0.0, 0.0); self.len];
        for (b, &x) in buf.iter_mut().zip(input) {
            b.re = x;
        }
        self.full_forward(&mut buf);
        out.copy_from_slice(&buf[..self.bins()]);
    }

    /// Inverse of [`forward`](Self::forward), including the `1/len` scale.
    /// The spectrum is extended with Hermitian symmetry and the real part of
    /// the result is returned.
    pub(crate) fn inverse(&self, spectrum: &[C64], out: &mut [f64]) {
        debug_assert_eq!(spectrum.len(), self.bins());
        let n = self.len;
        let mut buf: Vec<C64> = vec![C64::new(0.0, 0.0); n];
        buf[..spectrum.len()].copy_from_slice(spectrum);
        for k in 1..n.div_ceil(2) {
            buf[n - k] = spectrum[k].conj();
        }
        self.full_inverse(&mut buf);
        let scale = 1.0 / n as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }

    #[cfg(feature = "std")]
    fn full_forward(&self, buf: &mut [C64]) {
        self.forward.process(buf);
    }

    #[cfg(feature = "std")]
    fn full_inverse(&self, buf: &mut [C64]) {
        self.inverse.process(buf);
    }

    #[cfg(not(feature = "std"))]
    fn full_forward(&self, buf: &mut [C64]) {
        self.direct(buf, false);
    }

    #[cfg(not(feature = "std"))]
    fn full_inverse(&self, buf: &mut [C64]) {
        self.direct(buf, true);
    }

    #[cfg(not(feature = "std"))]
    fn direct(&self, buf: &mut [C64], inverse: bool) {
        let n = self.len;
        let input = buf.to_vec();
        for (k, out) in buf.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (j, x) in input.iter().enumerate() {
                let tw = self.twiddles[(k * j) % n];
                acc += x * if inverse { tw.conj() } else { tw };
            }
            *out = acc;
        }
    }
}

/// Full linear convolution of two real sequences.
pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 || cfg!(not(feature = "std")) {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in out[i..].iter_mut().zip(b) {
                *o += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let fft = RealFft::new(n);
    let mut fa = vec![C64::new(0.0, 0.0); fft.bins()];
    let mut fb = vec![C64::new(0.0, 0.0); fft.bins()];
    fft.forward(a, &mut fa);
    fft.forward(b, &mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    let mut out = vec![0.0; n];
    fft.inverse(&fa, &mut out);
    out.truncate(out_len);
    out
}
