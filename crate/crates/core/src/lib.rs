//! Thin-plate smoothing splines driven by explicit roughness or residual
//! budgets, with derivative evaluation and variance estimation for noisy
//! (e.g. simulation-generated) data.

pub mod basis;
pub mod bench;
pub mod data;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod model;
pub mod rng;
pub mod variance;
pub mod system;

pub use model::SplineModel;
pub use data::{Dataset, DomainBox, SplineSetup};
pub use error::{Error, Result};
