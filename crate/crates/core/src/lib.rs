//! Plug-and-play image restoration with Ishikawa fixed-point solvers and
//! spectral certification of denoiser Jacobians.
//!
//! The crate is organised by capability:
//!
//! - [`image`], [`linop`], [`fft`], [`dct`]: images, kernels and linear operators
//! - [`denoisers`]: built-in denoisers with Jacobian probes
//! - [`spectral`]: power iteration, the modified power iteration and certificates
//! - [`fidelity`]: data terms for deblurring, super-resolution and Poisson denoising
//! - [`solvers`]: the Ishikawa engine, PnPI-GD/HQS/FBS and baselines
//! - [`oracle`]: dense ground truth and randomized lemma checks
//! - [`cli`]: the `pnpi` command surfaces

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dct;
pub mod denoisers;
pub mod error;
pub mod fft;
pub mod fidelity;
pub mod image;
pub mod io;
pub mod linop;
pub mod metrics;
pub mod oracle;
pub mod phantoms;
pub mod solvers;
pub mod spectral;

pub use denoisers::{Denoiser, DenoiserHandle, DenoiserSpec};
pub use error::{Error, Result};
pub use fidelity::{Fidelity, FidelityHandle};
pub use image::{Image, Kernel};
pub use solvers::{IterTrace, Schedule, SolverConfig, SolverKind};
pub use spectral::{Assumption, ProbeConfig, SpectralCertificate};
