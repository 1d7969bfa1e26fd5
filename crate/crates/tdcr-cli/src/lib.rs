//! Configuration handling, CSV artifacts and command implementations behind
//! the `tdcr` binary, exposed as a library so the file formats can be
//! exercised directly in tests.

pub mod commands;
pub mod config;
pub mod csvio;

/// Errors surfaced to the user, sorted by exit code: configuration problems
/// exit 2, numeric failures (integrator breakdown, loss of positive
/// definiteness, failed invariant checks) exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(tdcr_core::Error),
    ChecksFailed(usize),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::ChecksFailed(count) => write!(f, "{count} invariant check(s) failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tdcr_core::Error> for CliError {
    fn from(e: tdcr_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(_) => 2,
            CliError::ChecksFailed(_) => 3,
        }
    }
}
