use std::fmt;

use sphx_core::Error;

/// A failed subcommand, classified by exit status.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }

    /// Wraps a core error raised by `module`.
    pub fn from_core(module: &str, err: Error) -> Self {
        let msg = format!("{module}: {err}");
        if err.is_data_error() {
            CliError::Data(msg)
        } else {
            match err {
                Error::InvalidArgument(_) => CliError::Usage(msg),
                _ => CliError::Numeric(msg),
            }
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Data(format!("io error on {}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

/// `map_err` adapter tagging core errors with their module.
pub fn stage(module: &'static str) -> impl Fn(Error) -> CliError {
    move |e| CliError::from_core(module, e)
}

pub type CliResult<T> = std::result::Result<T, CliError>;
