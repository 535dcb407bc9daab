use thiserror::Error;

pub type Result<T> = std::result::Result<T, KplsError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KplsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("singular triangular matrix: diagonal entry {index} is below tolerance")]
    Singular { index: usize },

    #[error("Krylov basis nearly collinear at component {index}; retry with m < {index}")]
    NearBreakdown { index: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("finite-difference oracle inconclusive: {0}")]
    OracleInconclusive(String),

    #[error("cannot estimate sigma: degrees of freedom {dof:.3} leave no residual freedom with n = {n}; pass sigma explicitly")]
    CannotEstimateSigma { dof: f64, n: usize },

    #[error("model selection failed for every configuration:\n{}", .0.join("\n"))]
    SelectionFailed(Vec<String>),
}

impl KplsError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KplsError::InvalidInput(msg.into())
    }

    /// True for errors that come from the numerics rather than from the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            KplsError::Singular { .. }
                | KplsError::NearBreakdown { .. }
                | KplsError::Numerical(_)
                | KplsError::OracleInconclusive(_)
                | KplsError::CannotEstimateSigma { .. }
                | KplsError::SelectionFailed(_)
        )
    }
}
