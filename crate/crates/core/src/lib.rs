//! Isotropic random scattering ensembles and the variance structure of
//! multi-port parameters they induce.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod ingest;
pub mod matrix;
pub mod multiport;
pub mod portwaves;
pub mod rng;
pub mod sie;
pub mod sphere;
pub mod stats;

pub use error::{Error, Result};
pub use matrix::ComplexMatrix;
pub use rng::SeedStream;
