use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("input contains non-finite entries ({context})")]
    NonFinite { context: &'static str },

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("columns are not orthonormal (Gram deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("spanning set is rank deficient (element {index} is dependent)")]
    RankDeficientSpan { index: usize },

    #[error("SVD did not converge")]
    SvdFailed,

    #[error("{0}")]
    Unsupported(&'static str),

    #[error("sign matrix not in T (residual {residual:e}); use the maximization fallback")]
    SignNotInSubspace { residual: f64 },

    #[error("basis dimension {dim} exceeds cap {cap}; use a smaller instance")]
    DimensionCap { dim: usize, cap: usize },
}

impl Error {
    pub(crate) fn dims(expected: (usize, usize), found: (usize, usize)) -> Self {
        use alloc::format;
        Error::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
