use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(signest_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Io { .. } => 1,
            Self::Numerical(_) => 2,
        }
    }
}

impl From<signest_core::Error> for CliError {
    fn from(e: signest_core::Error) -> Self {
        use signest_core::Error as E;
        match e {
            E::NotPositiveDefinite { .. }
            | E::ConvergenceFailure { .. }
            | E::RankDeficient
            | E::SingularFim { .. }
            | E::InfeasibleV(_) => Self::Numerical(e),
            other => Self::Config(other.to_string()),
        }
    }
}
