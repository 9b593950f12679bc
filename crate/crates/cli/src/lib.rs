//! Command-line front end: configuration, load files and commands.

pub mod commands;
pub mod config;
pub mod load;

pub use commands::{CliError, CliResult};
pub use config::{Config, ConfigError};

/// Thread count from `WSYM_THREADS`, else the configured one.
pub fn thread_count(cfg: &Config) -> Result<Option<usize>, ConfigError> {
    match std::env::var("WSYM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ConfigError::Invalid(format!("WSYM_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(cfg.threads),
    }
}
