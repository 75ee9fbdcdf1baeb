use std::path::PathBuf;

use ablate_core::corpus::CorpusError;
use ablate_core::imageops::ImageError;
use ablate_core::stats::StatsError;
use ablate_core::trainkit::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Split verification or another precondition of the protocol failed.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Malformed(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Malformed(_) | CliError::Io { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::QuotaMismatch { .. } | CorpusError::EmptySplit(_) => CliError::Validation(e.to_string()),
            _ => CliError::Malformed(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::ConstantInput | StatsError::RhoAtUnity(_) | StatsError::NonFinite => {
                CliError::Numerical(e.to_string())
            }
            StatsError::TooFewSamples(_) | StatsError::MissingGroundTruth(_) => CliError::Validation(e.to_string()),
            _ => CliError::Malformed(e.to_string()),
        }
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::DegenerateConfiguration => CliError::Numerical(e.to_string()),
            _ => CliError::Malformed(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Stats(s) => s.into(),
            TrainError::NonFiniteGradient => CliError::Numerical(e.to_string()),
            TrainError::LeakyPartition(_) | TrainError::EmptySplit(_) | TrainError::InvalidConfig(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Malformed(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Malformed(e.to_string())
    }
}
