//! Command implementations and the inspection service behind the `nhssa`
//! binary.

pub mod commands;
pub mod error;
pub mod service;
pub mod session;

pub use error::{CliError, Result};
