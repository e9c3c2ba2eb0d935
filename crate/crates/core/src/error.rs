use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must describe the same realization disagree.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// All reference energies coincide, so no level spacing exists.
    #[error("degenerate reference spectrum: mean level spacing is zero")]
    DegenerateSpectrum,

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The trace never left its plateau; `lower_bound` is the last time inspected.
    #[error("fidelity freeze has not ended within the trace (t_e > {lower_bound})")]
    FreezeNotEnded { lower_bound: f64 },

    /// Too many realizations failed for the ensemble average to be trusted.
    #[error("{failed} of {total} realizations failed (first: realization {first_index}: {first_message})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first_index: usize,
        first_message: String,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors produced by floating-point breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::DegenerateSpectrum | Error::TooManyFailures { .. }
        )
    }
}
