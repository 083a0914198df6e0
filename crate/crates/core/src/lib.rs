pub mod cli;
pub mod corpus;
pub mod degrade;
pub mod error;
pub mod imageio;
pub mod neuralnet;
pub mod eval;
pub mod qualitynet;
pub mod routing;
pub(crate) mod seed;

pub use error::{Error, Result};
