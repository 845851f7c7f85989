//! Library half of the `qamoe` command-line tool.

pub mod commands;
pub mod config;

use qamoe_core::Error;

pub use config::{ConfigError, Protocol, RunConfig};

/// Exit codes, one per error class.
pub mod exit {
    pub const OK: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INVALID: u8 = 3;
    pub const IO: u8 = 4;
    pub const FORMAT: u8 = 5;
    pub const DIVERGENCE: u8 = 6;
    pub const ORACLE: u8 = 7;
    pub const METRIC: u8 = 8;
}

/// Maps the innermost recognizable cause of `err` to its exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return exit::INVALID;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidInput(_) => exit::INVALID,
                Error::Io(_) => exit::IO,
                Error::Format { .. } | Error::Version { .. } => exit::FORMAT,
                Error::Divergence { .. } => exit::DIVERGENCE,
                Error::OracleFailure(_) => exit::ORACLE,
                Error::UndefinedMetric(_) => exit::METRIC,
            };
        }
        if cause.is::<std::io::Error>() {
            return exit::IO;
        }
    }
    exit::OTHER
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_root_cause() {
        let e = anyhow::Error::new(Error::Divergence {
            epoch: 2,
            step: 9,
            message: "nan".into(),
        })
        .context("training");
        assert_eq!(exit_code(&e), exit::DIVERGENCE);
        let e = anyhow::Error::new(std::io::Error::from(std::io::ErrorKind::NotFound))
            .context("loading");
        assert_eq!(exit_code(&e), exit::IO);
        let e = anyhow::Error::new(Error::Version {
            found: 3,
            expected: 1,
        });
        assert_eq!(exit_code(&e), exit::FORMAT);
        let e = anyhow::Error::new(ConfigError {
            line: Some(1),
            message: "x".into(),
        });
        assert_eq!(exit_code(&e), exit::INVALID);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), exit::OTHER);
    }
}
