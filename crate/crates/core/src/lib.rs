pub mod config;
pub mod error;
pub mod export;
pub mod flows;
pub mod pipeline;
pub mod homes;
pub mod ingest;
pub mod registry;
pub mod spatial;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
