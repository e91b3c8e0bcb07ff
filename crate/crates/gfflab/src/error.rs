use std::path::PathBuf;

use gfflab_core::clusters::ClusterError;
use gfflab_core::fps::FpsError;
use gfflab_core::gff::GffError;
use gfflab_core::soups::SoupError;
use gfflab_core::NetworkError;

/// Everything that can stop an experiment.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid network: {0}")]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Soup(#[from] SoupError),
    #[error(transparent)]
    Fps(#[from] FpsError),
    #[error(transparent)]
    Gff(#[from] GffError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// `2` for configuration problems, `1` otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Parse { .. } | Error::Invalid(_) | Error::Network(_) => 2,
            Error::Cluster(ClusterError::WrongIntensity(_) | ClusterError::NegativeBoundary { .. }) => 2,
            Error::Soup(SoupError::BadIntensity(_) | SoupError::NegativeBoundary { .. } | SoupError::NotDominated(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
