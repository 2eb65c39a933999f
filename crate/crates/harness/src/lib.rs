//! Command-line entry points and the annotation HTTP service.

pub mod cli;
pub mod server;
