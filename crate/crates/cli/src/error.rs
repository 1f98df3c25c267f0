use dycore_perf::IoSimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or an invalid scenario file.
    #[error("{0}")]
    Config(String),
    /// A valid configuration that the model cannot run (memory guard, ...).
    #[error("{0}")]
    Simulation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn simulation(msg: impl Into<String>) -> Self {
        CliError::Simulation(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// Capacity failures are simulation outcomes; everything else the I/O
    /// model rejects is a configuration mistake.
    pub fn from_io(context: &str, e: IoSimError) -> Self {
        match e {
            IoSimError::UnwritableField { .. } | IoSimError::OutOfMemory { .. } => {
                CliError::simulation(format!("{context}: {e}"))
            }
            _ => CliError::config(format!("{context}: {e}")),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
