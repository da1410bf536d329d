//! File formats, configuration, run artifacts, the `moi` CLI and the HTTP
//! API on top of `moi-core`.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod counterfactual;
pub mod error;
pub mod formats;
pub mod model;
pub mod report;
pub mod run;
pub mod serve;

pub use config::Config;
pub use error::{MoiError, Result};
