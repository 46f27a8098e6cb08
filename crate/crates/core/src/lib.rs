pub mod aggregation;
pub mod clustering;
pub mod config;
pub mod data;
pub mod error;
pub mod localmodel;
pub mod metrics;
pub mod orchestrator;
pub mod seed;

pub use error::{Error, Result};
