use std::fmt;
use std::path::Path;

/// Failure of a subcommand, carrying its exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration (exit 1).
    Config(String),
    /// Unreadable or invalid input data (exit 2).
    Data(String),
    /// At least one crosscheck row failed (exit 3).
    Crosscheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Crosscheck(_) => 3,
        }
    }

    pub fn data_io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn output_io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Config(format!("cannot write {}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Crosscheck(m) => write!(f, "crosscheck failed: {m}"),
        }
    }
}

impl From<telomere_core::Error> for CliError {
    fn from(e: telomere_core::Error) -> Self {
        use telomere_core::Error as E;
        match e {
            E::Domain(_) | E::Io(_) | E::Singular { .. } => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
