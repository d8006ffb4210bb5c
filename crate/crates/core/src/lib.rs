pub mod config;
pub mod error;
pub mod geo;
pub mod geojson;
pub mod ids;
pub mod ingest;
pub mod mapping;
pub mod milp;
pub mod partition;
pub mod pipeline;
pub mod powerflow;
pub mod primary_net;
pub mod secondary;

pub use error::{Error, Result};
