use std::io;

/// Errors of the IO layer; [`Error::exit_code`] maps them to process status.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("format: {0}")]
    Format(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] layersnet_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

impl Error {
    pub fn exit_code(&self) -> i32 {
        use layersnet_core::Error as C;
        match self {
            Error::Io(_) | Error::Usage(_) => EXIT_USAGE,
            Error::Core(C::Divergence { .. } | C::NonFinite(_)) => EXIT_DIVERGENCE,
            _ => EXIT_VALIDATION,
        }
    }
}

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}
