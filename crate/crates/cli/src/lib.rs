//! Filesystem, configuration and orchestration layer over `allocbench-core`.
//!
//! Every artifact is a JSON document wrapping the command's payload with the
//! tool version and the fully resolved configuration.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod experiment;
pub mod ingest;
pub mod pipeline;

use std::fmt;

pub use config::RunConfig;

pub const TOOL_NAME: &str = "allocbench";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command failure, mapped to the process exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, bad config values, missing seed.
    Usage(String),
    /// Input files that do not have the expected shape.
    Schema(String),
    /// Anything that goes wrong while running.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) | Failure::Schema(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Schema(m) => write!(f, "schema error: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<allocbench_core::Error> for Failure {
    fn from(e: allocbench_core::Error) -> Self {
        match e {
            allocbench_core::Error::InvalidConfig(m) => Failure::Usage(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;
