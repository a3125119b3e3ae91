//! Streaming command-line front end for the `seqgp` engines.

pub mod build;
pub mod check;
pub mod config;
pub mod data;
pub mod error;
pub mod exact_cmd;
pub mod run;

pub use config::Config;
pub use data::{ingest_csv, Dataset};
pub use error::{CliError, CliResult};
pub use run::{run_stream, write_report, RunReport};
