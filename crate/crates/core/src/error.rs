use std::fmt;

use crate::krylov::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes shared by every module of the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A pointwise function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A constructor or operation received an out-of-range parameter.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An operation was called on inputs that violate its precondition.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// An iterative linear solve stopped before reaching its tolerance.
    #[error("{what} did not converge after {} iterations (relative residual {:.3e})", report.iterations, report.relative_residual)]
    Convergence { what: &'static str, report: SolveReport },

    /// The order parameter left the domain of a singular potential.
    #[error("state error: {count} cell(s) outside the potential domain")]
    StateDomain { count: usize },

    /// The inner nonlinear iteration of a time step failed.
    #[error("step failed at t = {t}: {reason} (residual history: {})", History(.residuals))]
    Step { t: f64, reason: String, residuals: Vec<f64> },

    /// The advective time-step guard rejected the requested step.
    #[error("stability guard: dt = {dt:.3e} exceeds h / (4 max|u|) = {limit:.3e}")]
    Stability { dt: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct History<'a>(&'a [f64]);

impl fmt::Display for History<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{r:.2e}")?;
        }
        Ok(())
    }
}
