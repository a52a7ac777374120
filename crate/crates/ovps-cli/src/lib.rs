//! Command-line layer over the decision pipeline: configuration, NPY and
//! canonical-JSON I/O, and the batch subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod json;
pub mod npy;
pub mod pipeline;
