use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid problem or mesh description.
    #[error("configuration error: {0}")]
    Config(String),
    /// Out-of-domain model parameter.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Failure in the finite element analysis (singular system, solver breakdown).
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("optimizer error: {0}")]
    Optimizer(String),
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, iteration: usize) -> Self {
        Error::AtIteration { iteration, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
