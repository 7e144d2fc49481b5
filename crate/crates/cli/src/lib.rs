//! Command line and HTTP surface for the chainrag engine.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod payload;
pub mod service;

pub use crate::commands::{run, Cli};
pub use crate::error::CliError;
