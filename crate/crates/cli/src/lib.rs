//! Batch front end for the `ccpl-core` losses and metrics: PNG ingestion,
//! pairing by file name, config resolution, and deterministic reports.

pub mod cli;
pub mod error;
pub mod imageio;
pub mod manifest;
pub mod report;
pub mod settings;

pub use cli::{run, Cli, Outcome};
pub use error::{HarnessError, Result};
