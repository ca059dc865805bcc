//! Command implementations behind the `tlstm` binary.

pub mod commands;
pub mod config;
pub mod error;
