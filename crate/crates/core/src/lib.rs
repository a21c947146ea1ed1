//! Numerical core for relative transfer function (RTF) estimation with
//! external microphones.
//!
//! Everything in this crate works on one frequency bin at a time: dense
//! complex linear algebra, recursive covariance tracking, the spatial
//! coherence (SC) RTF estimator with its mSNR weight combination, and the
//! RTF-steered MVDR beamformer. Signal IO, STFT processing and the scene
//! simulator live in the `rtfcomb` companion crate.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod beamform;
pub mod covariance;
mod error;
pub mod linalg;
pub(crate) mod math;
pub mod rtf;

pub use error::Error;
pub use linalg::{CMatrix, CVector, C64};

pub type Result<T, E = Error> = core::result::Result<T, E>;
