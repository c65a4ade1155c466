//! Spectral simulation and numerical diagnostics for fractional stochastic
//! heat-type equations
//!
//! ```text
//!   ∂u/∂t = D u + b(u) + σ(u) Ḟ    on ℝ^d (periodized),
//! ```
//!
//! where `D` is an anisotropic, possibly skewed, stable generator and `Ḟ` is
//! Gaussian noise, white in time and spatially correlated through a
//! spectral measure `μ`.

pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod grid;
pub mod io;
pub mod noise;
pub mod quadrature;
pub mod regularity;
pub mod spectral_measure;
pub mod solver;
pub mod stable_kernel;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Space};
pub use spectral_measure::SpectralMeasure;
pub use stable_kernel::FractionalIndex;
