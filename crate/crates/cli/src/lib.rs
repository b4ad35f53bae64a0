//! Command-line verbs and the HTTP service for tree collage layouts.

pub mod commands;
pub mod service;

pub use commands::{exit_code, RunOptions};
