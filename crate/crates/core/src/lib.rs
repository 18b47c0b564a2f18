pub mod config;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod gan;
pub mod metrics;
pub mod models;
pub mod numeric;
pub mod pipeline;
pub mod replay;
pub mod tasks;

pub use error::{Error, Result};
