use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(
        "checkpoint was trained for a different configuration\n  config fingerprint:     {config}\n  checkpoint fingerprint: {checkpoint}"
    )]
    Fingerprint { config: String, checkpoint: String },

    #[error(transparent)]
    Core(#[from] umixer::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2: configuration, 3: data or checkpoint, 4: numeric failure, 1: anything else.
    pub fn exit_code(&self) -> u8 {
        use umixer::Error as E;
        match self {
            CliError::Config(_) | CliError::Fingerprint { .. } => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                E::Config(_) | E::Parameter(_) => 2,
                E::Parse { .. }
                | E::InsufficientData { .. }
                | E::Checkpoint(_)
                | E::Checksum
                | E::Version { .. }
                | E::Io(_) => 3,
                E::NonFiniteGradient(_) | E::Diverged { .. } | E::UndefinedMase => 4,
                E::Dimension { .. } | E::Contract(_) | E::Json(_) => 1,
            },
        }
    }
}
