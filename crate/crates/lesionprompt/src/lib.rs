//! Files, configuration, manifests, parallel orchestration and the
//! `lesionprompt` command line on top of `lesionprompt-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
