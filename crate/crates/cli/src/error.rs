//! Process-level error taxonomy mapped to exit codes.

use thiserror::Error;

/// Exit codes: 0 success, 1 usage, 2 data, 3 budget exhausted (solve).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("budget exhausted without recovery; best reward {0}")]
    BudgetExhausted(f64),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::BudgetExhausted(_) => 3,
        }
    }
}
