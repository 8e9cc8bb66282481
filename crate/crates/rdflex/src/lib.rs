//! File formats, command-line interface and Monte Carlo harness around
//! [`rdflex_core`].

pub mod app;
pub mod cli;
pub mod config;
pub mod io;
pub mod report;
pub mod simulate;

pub use app::{run, run_on, AppError, Design};
pub use config::RunConfig;
pub use report::RunReport;
