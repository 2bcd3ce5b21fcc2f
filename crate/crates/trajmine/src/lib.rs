//! File formats, overlays and end-to-end runs on top of [`trajmine_core`].

#![deny(unsafe_code)]

pub mod config;
pub mod io;
pub mod overlay;
pub mod pipeline;

pub use config::{ConfigError, RunConfig};
pub use pipeline::RunError;
