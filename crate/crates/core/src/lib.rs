pub mod active_learning;
pub mod adequacy;
pub mod config;
pub mod cost;
pub mod error;
pub mod experiment;
pub mod forest;
pub mod mlmc;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod system;

pub use error::{Error, Result};
