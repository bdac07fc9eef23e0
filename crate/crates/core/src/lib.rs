pub mod checkpoint;
pub mod config;
pub mod confusion;
pub mod corpus;
pub mod dataset;
pub mod cpc;
pub mod error;
pub mod eval;
pub mod feature_store;
pub mod features;
pub mod gan;
pub mod inference;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use error::{Result, SvcError};
