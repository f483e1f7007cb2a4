use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] zeno_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("interrupted")]
    Interrupted,
}

impl CliError {
    /// 0 success, 2 usage, 3 numerical failure, 4 resource limit.
    pub fn exit_code(&self) -> i32 {
        use zeno_core::Error as E;
        match self {
            CliError::Core(E::Numerical { .. }) => 3,
            CliError::Core(E::Resource(_)) => 4,
            CliError::Core(_) | CliError::Usage(_) => 2,
            CliError::Io(_) => 1,
            CliError::Interrupted => 130,
        }
    }
}
