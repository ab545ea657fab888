//! Multichannel speech enhancement primitives.
//!
//! The crate covers the STFT-domain array signal model: framed analysis and
//! synthesis, shoebox room simulation with the image method, scene
//! spatialization and SNR mixing, oracle MVDR/MWF beamformers, and the
//! Taylor-expansion pipeline that refines a spatially filtered spectrum with
//! recursively generated high-order residual-cancellation terms.
//!
//! Everything here is a pure function of its inputs. The crate is `no_std`
//! (with `alloc`) when the default `std` feature is disabled; the only thing
//! `std` changes is the FFT backend.

#![cfg_attr(not(feature = "std"), no_std)]
// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod beamforming;
pub mod error;
mod fft;
pub mod metrics;
pub mod oracle;
pub mod room;
pub mod scene;
pub mod signal;
pub mod synthetic;
pub mod taylor;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;

pub(crate) mod prelude {
    pub(crate) use alloc::{format, vec, vec::Vec};
    #[allow(unused_imports)]
    pub(crate) use num_traits::Float;
}
