//! Command-line front end: configuration files, CSV tables and the run
//! manifest around `signest-core`.

pub mod app;
pub mod config;
pub mod csv;
pub mod dataset;
pub mod error;

pub use app::run;
pub use error::CliError;
