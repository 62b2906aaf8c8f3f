//! Wire API and command line for the dobj engine.
//!
//! [`router`] builds the HTTP service over a shared [`Store`]; [`run_cli`]
//! runs one command-line invocation and returns its exit code.

mod cli;
mod config;
mod error;
mod server;

pub use cli::run_cli;
pub use config::{ServerConfig, DEFAULT_PORT};
pub use error::ApiError;
pub use server::{router, serve, AppState, DEFAULT_PAGE, MAX_PAGE};

pub use dobj_core::Store;
