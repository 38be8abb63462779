//! Rectangular rotational invariant estimators (RIEs) for matrix denoising.
//!
//! Given `Y = √λ S + Z` with `Z` bi-rotationally invariant, an RIE keeps the
//! singular vectors of `Y` and replaces its singular values by shrunk values
//! `ξ_j`. This crate provides the oracle, general-noise and Gaussian-noise
//! shrinkers, the rectangular free-probability transforms they depend on,
//! random-matrix generators, closed-form MMSE quantities and a seeded
//! benchmark harness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod estimators;
pub mod freeprob;
pub mod matrix_io;
pub mod models;
pub mod plot;
pub mod spectra;
pub mod theory;

pub use error::{Result, RieError};
pub use freeprob::{NoiseFamily, NoiseKind};
pub use spectra::{EmpiricalSpectrum, SpectralFunction, SvdResult};
