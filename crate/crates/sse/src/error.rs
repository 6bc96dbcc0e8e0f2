use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("design does not match the configuration: {0}")]
    Mismatch(String),
    #[error("verification failed:\n{0}")]
    Verification(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(sse_core::Error),
}

impl From<sse_core::Error> for CliError {
    fn from(e: sse_core::Error) -> Self {
        use sse_core::Error as E;
        match e {
            E::Infeasible(r) => CliError::Infeasible(r.summary),
            E::Dimension(m) => CliError::Mismatch(m),
            E::Parameter(_) | E::Schedule(_) | E::AttackAssumption(_) | E::Domain(_) => CliError::Usage(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Infeasible(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }

    pub fn exit(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }
}
