//! Session service: HTTP API, event streams and the `meshwright` command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod host;
pub mod runtime_env;
pub mod summary;

pub use config::ServiceConfig;
pub use host::{HostError, SessionHandle, SessionHost};
pub use runtime_env::Environment;
pub use summary::SessionSummary;
