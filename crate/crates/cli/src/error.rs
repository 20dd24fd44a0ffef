use std::path::PathBuf;

use ccpl_core::CcplError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no file names in common between {} and {}", gen.display(), real.display())]
    NoPairsFound { gen: PathBuf, real: PathBuf },

    #[error("{}: only 8-bit RGB PNG input is supported, found {found}", path.display())]
    UnsupportedImage { path: PathBuf, found: String },

    #[error("{}: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: no feature row named {id:?}", path.display())]
    MissingFeature { path: PathBuf, id: String },

    #[error(transparent)]
    Core(#[from] CcplError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
