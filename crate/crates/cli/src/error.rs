use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {msg}")]
    Config { path: String, msg: String },

    #[error("cannot parse {file}: {msg}")]
    Parse { file: String, msg: String },

    #[error(transparent)]
    Core(#[from] qlab_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },

    #[error("plot: {0}")]
    Plot(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Parse { .. } | CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                qlab_core::Error::InvalidLattice(_)
                | qlab_core::Error::InvalidState(_)
                | qlab_core::Error::InvalidPotential(_)
                | qlab_core::Error::InvalidPlan(_)
                | qlab_core::Error::Unresolvable { .. }
                | qlab_core::Error::BoundaryMass { .. }
                | qlab_core::Error::WavefunctionFormat(_)
                | qlab_core::Error::TooFewResolutions(_) => 2,
                _ => 3,
            },
            CliError::Io { .. } | CliError::Plot(_) => 3,
        }
    }
}
