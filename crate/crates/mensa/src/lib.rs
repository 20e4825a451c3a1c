//! Multi-target domain adaptation for 3D point clouds.
//!
//! A point-cloud encoder is trained on a labeled source domain while several
//! unlabeled target domains are aligned to it in latent space: a
//! kernel two-sample penalty pulls feature distributions together, a domain
//! classifier behind a gradient-reversal layer erases domain identity, and
//! mixed latent features (several mixing strategies, including an ensemble
//! average over all targets) sharpen the domain classifier's view of the
//! shared space. Everything runs on CPU with hand-rolled reverse-mode
//! differentiation over flat parameter vectors, generic over f32/f64.

pub mod adaptation;
pub mod cli;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod losses;
pub mod nn;
pub mod plot;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
