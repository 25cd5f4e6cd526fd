use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A point landed on (or numerically next to) a base point of a slit map.
    #[error("singular point hit at event {event}: {detail}")]
    Singularity { event: usize, detail: String },

    /// Tip preimages got too close to the base arc of a new particle.
    #[error("geometry error at arm {arm}: {detail}")]
    Geometry { arm: usize, detail: String },

    /// A tip second derivative vanished or became non-finite.
    #[error("degenerate tip {arm}: |second derivative| = {value}")]
    DegenerateTip { arm: usize, value: f64 },

    #[error("initial configuration could not be built: {0}")]
    Construction(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("particle budget exceeded: {needed} > {budget}")]
    Budget { needed: usize, budget: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
