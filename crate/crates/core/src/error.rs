use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("histogram dimension mismatch: {0} bins vs {1} bins")]
    Dimension(usize, usize),

    #[error("property `{property}` expects a {expected} value")]
    KindMismatch {
        property: String,
        expected: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown image id `{0}`")]
    UnknownImage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("layout infeasible: images `{first}` and `{second}` still overlap (ratio {ratio:.4})")]
    LayoutInfeasible {
        first: String,
        second: String,
        ratio: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode error on {path}: {message}")]
    Image { path: String, message: String },
}

impl Error {
    /// True for errors caused by bad user input rather than by the layout itself.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::LayoutInfeasible { .. } | Error::Io { .. })
    }
}
