pub mod clt_harness;
pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod lattice_env;
pub mod model;
pub mod regeneration;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
