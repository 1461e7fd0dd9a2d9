//! Numerical toolkit for building neural operators that are contractions by
//! construction, and for checking the claims that come with that design:
//! composed Lipschitz certificates, geometric fixed-point convergence,
//! Fourier/wavelet multi-scale approximation, linear-region capacity,
//! regularized training, and Amdahl-limited parallel speedup.
//!
//! All signals live on uniform periodic 1D grids ([`GridFunction`]).

pub mod capacity;
pub mod error;
pub mod fixed_point;
pub mod linalg;
pub mod multiscale;
pub mod operator_net;
pub mod parallel_bench;
pub mod training;
pub mod transforms;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};

/// Real samples of a function on a uniform periodic grid `x_n = n / N`.
pub type GridFunction = Vector;
