pub mod autograd;
pub mod cli;
pub mod dag;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod sampler;
pub mod schema;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
