//! Numerical laboratory for the Steklov spectral problem in a planar domain
//! whose boundary carries a blunted power cusp.
//!
//! The crate computes the discrete spectra of the blunted problem across the
//! blunting parameter `ε`, together with the closed-form quantities that
//! organize them: the continuous-spectrum threshold, the log-periodic
//! ("blinking") ε-sequences, the descent speed of gliding branches and the
//! ε-insensitive trapped-mode families.
//!
//! Modules roughly follow the pipeline:
//!
//! * [`geometry`] — domain description and graded triangular meshes,
//! * [`assembly`] — P1 stiffness / boundary-mass matrices with constraints,
//! * [`eigensolve`] — boundary (Dirichlet-to-Neumann) reduction and dense
//!   generalized eigensolve,
//! * [`reduced_model`] — the 1D Euler-type model of the cusp with exact
//!   eigenvalues, used as an oracle throughout,
//! * [`asymptotics`] — closed-form predictions (threshold, τ₀, blinking
//!   ε-sequence, gliding speed, wave normalizations),
//! * [`corrector`] — cross-section corrector and half-strip boundary layer,
//! * [`cusp_fit`] — wave decomposition of computed eigenfunctions and
//!   scattering-phase estimation,
//! * [`sweep`] — ε-sweep orchestration, branch tracking and reports,
//! * [`cli`] — command line entry point and persistence.

pub mod assembly;
pub mod asymptotics;
pub mod cli;
pub mod corrector;
pub mod cusp_fit;
pub mod eigensolve;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod reduced_model;
pub mod sweep;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
