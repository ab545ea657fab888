//! Files, datasets and the command line around `mcse-core`: WAV and RIR
//! IO, dataset manifests, binary weight/spectrum dumps, manifest
//! evaluation reports and the `mcse` subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod dump;
pub mod error;
pub mod evaluate;
mod json;
pub mod manifest;
pub mod rir;
pub mod wav;

pub use error::{Error, Result};
