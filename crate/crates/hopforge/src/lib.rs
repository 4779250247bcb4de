//! File formats, HTTP backends, a thread-pool executor and the command
//! implementations behind the `hopforge` binary.

pub mod cache;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod files;
pub mod http;
pub mod logging;

pub use error::{AppError, AppResult, ErrorKind};
