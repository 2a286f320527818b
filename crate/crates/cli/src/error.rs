use std::fmt;

use weds_core::descriptors::{DescriptorError, DescriptorFileError};
use weds_core::evaluation::EvalError;
use weds_core::spectral::{BasisFileError, SpectralError};
use weds_core::wavelet::WaveletError;
use weds_core::MeshError;
use weds_mgcn::MgcnError;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: exit code 1.
    Usage(String),
    /// Unreadable, inconsistent or stale inputs: exit code 2.
    Data(String),
    /// A computation that did not converge or produced non-finite values: exit code 3.
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::NonConvergence { .. } | SpectralError::Factorization => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<WaveletError> for CliError {
    fn from(e: WaveletError) -> Self {
        match e {
            WaveletError::FrameResidual { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DescriptorError> for CliError {
    fn from(e: DescriptorError) -> Self {
        match e {
            DescriptorError::Wavelet(w) => w.into(),
            DescriptorError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MgcnError> for CliError {
    fn from(e: MgcnError) -> Self {
        match e {
            MgcnError::Wavelet(w) => w.into(),
            MgcnError::NonFinite { .. } | MgcnError::ZeroColumn(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<BasisFileError> for CliError {
    fn from(e: BasisFileError) -> Self {
        CliError::Data(format!("basis file: {e}"))
    }
}

impl From<DescriptorFileError> for CliError {
    fn from(e: DescriptorFileError) -> Self {
        CliError::Data(format!("descriptor file: {e}"))
    }
}
