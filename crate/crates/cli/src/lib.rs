//! Batch front-end for `nlse_pdf`: TOML experiment files in, JSON result
//! documents and CSV tables out.

pub mod config;
pub mod demo_out;
pub mod error;
pub mod field_io;
pub mod run;
pub mod sweep;

pub use config::{MethodSel, RunConfig};
pub use error::{CliError, Result};
pub use run::{run, ResultDocument};
