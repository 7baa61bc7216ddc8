use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    /// Bad parameters or unusable paths; exit code 2.
    Config(String),
    /// A validation check failed; exit code 1.
    Validation(String),
    /// A numerical routine missed its accuracy target; exit code 3.
    Accuracy(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Config(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) => 2,
            CliError::Accuracy(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Accuracy(m) => write!(f, "numerical accuracy failure: {m}"),
        }
    }
}

impl From<bnnprior::Error> for CliError {
    fn from(e: bnnprior::Error) -> Self {
        use bnnprior::Error as E;
        match e {
            E::Config(_) | E::Domain(_) | E::Resource(_) => CliError::Config(e.to_string()),
            _ => CliError::Accuracy(e.to_string()),
        }
    }
}

/// Exit code for an evaluator error recorded in a row.
pub fn is_accuracy(e: &bnnprior::Error) -> bool {
    matches!(CliError::from(e.clone()), CliError::Accuracy(_))
}
