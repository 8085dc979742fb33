//! Random matrix products: free-probability transforms, multivariate Bessel
//! functions, matrix samplers, limiting Laplace transforms and kernels, and
//! the Monte Carlo harness tying them together.

pub mod ensembles;
pub mod error;
pub mod harness;
pub mod limit;
pub mod linalg;
pub mod measures;
pub mod mvbessel;
pub mod special;

pub use error::{Error, Result};
