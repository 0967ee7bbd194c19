use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Array lengths or counts that do not fit together.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameter vectors or name sets that do not line up with a model.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sampler error at iteration {iteration}: {message}")]
    Sampler { iteration: usize, message: String },

    #[error("sampler diagnostic: burn-in acceptance rate {rate:.4} is below 1%; {hint}")]
    LowAcceptance { rate: f64, hint: String },

    #[error("optimization error: {0}")]
    Optimization(String),

    #[error("linear algebra error: design matrix is singular; collinear columns: {}", columns.join(", "))]
    Singular { columns: Vec<String> },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}
