//! Library side of the `phasewise` command: configuration, commands and the oracle
//! checks behind `verify`.

pub mod checks;
pub mod commands;
pub mod config;

pub use commands::{exit_code, Context, Outcome};
pub use config::RunConfig;
