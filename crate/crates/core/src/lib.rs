//! Two-stage compressive sensing reconstruction from partial Fourier data.
//!
//! Stage I solves a TV + shearlet-l1 + least-squares model with split Bregman
//! iterations. Stage II alternates between building edge-adaptive TV weights
//! from the current estimate and re-solving the weighted model, warm-started
//! from the Stage I iterates. Every linear solve is a pointwise division in
//! the unitary DFT domain because all operators involved are circulant.

pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod prox;
pub mod sampling;
pub mod shearlet;
pub mod solver;
pub mod spectral;

pub use error::{GeocsError, Result};
pub use metrics::{relerr, relerr_squared, snr, QualityReport};
pub use phantom::{phantom, PhantomKind};
pub use prox::{build_weights, shrink, EdgeStop, EdgeStopKind, WeightField};
pub use sampling::{add_noise, adjoint_sample, radial_mask, sample, Measurement, SamplingMask};
pub use shearlet::{ShearletSystem, SubbandStack};
pub use solver::{
    validate_params, IterationRecord, Reconstructor, SolverParams, SolverState, StageOutput,
};
pub use spectral::{diff_apply, diff_symbol, forward_fft, inverse_fft, Axis, DiffSymbol, Fft2, Image, SpectralField};
