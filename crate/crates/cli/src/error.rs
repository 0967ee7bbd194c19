use std::fmt;

use serde::Serialize;

/// Stable, machine-readable error categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorCode {
    #[serde(rename = "E_CONFIG")]
    Config,
    #[serde(rename = "E_INGEST")]
    Ingest,
    #[serde(rename = "E_MODEL")]
    Model,
    #[serde(rename = "E_SAMPLER")]
    Sampler,
    #[serde(rename = "E_OPTIM")]
    Optim,
    #[serde(rename = "E_LINALG")]
    Linalg,
    #[serde(rename = "E_IO")]
    Io,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Config => "E_CONFIG",
            ErrorCode::Ingest => "E_INGEST",
            ErrorCode::Model => "E_MODEL",
            ErrorCode::Sampler => "E_SAMPLER",
            ErrorCode::Optim => "E_OPTIM",
            ErrorCode::Linalg => "E_LINALG",
            ErrorCode::Io => "E_IO",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: ErrorCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Config, message)
    }

    pub fn ingest(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Ingest, message)
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        Self::new(ErrorCode::Io, format!("{}: {err}", path.display()))
    }

    /// The JSON object printed on stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            code: ErrorCode,
            message: &'a str,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Wrapper {
            error: Body {
                code: self.code,
                message: &self.message,
            },
        })
        .expect("error objects always serialise")
    }
}

impl From<mmm_core::Error> for CliError {
    fn from(err: mmm_core::Error) -> Self {
        use mmm_core::Error as E;
        let code = match &err {
            E::Config(_) => ErrorCode::Config,
            E::Sampler { .. } | E::LowAcceptance { .. } => ErrorCode::Sampler,
            E::Optimization(_) => ErrorCode::Optim,
            E::Singular { .. } => ErrorCode::Linalg,
            E::Dimension(_) | E::Domain(_) | E::Structure(_) | E::UndefinedMetric(_) => {
                ErrorCode::Model
            }
        };
        Self::new(code, err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
