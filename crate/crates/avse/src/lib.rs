//! File formats, experiment configuration and the end-to-end pipeline for
//! the `avse` command-line tool.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod lexicon;
pub mod lock;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod scenes;
pub mod wav;

pub use error::{CliError, Result};
