//! Crate-wide error type.
//!
//! Configuration and validation problems are separated from numerical
//! failures so the command-line layer can map them to distinct exit codes.

use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter combination violates a precondition (bad config, exit 2).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Lattice spacing too coarse to resolve the mollifier support.
    #[error("kernel unresolvable: spacing {spacing} exceeds eps*support/4 = {limit}")]
    KernelUnresolvable { spacing: f64, limit: f64 },

    /// Requested field would exceed the configured memory cap.
    #[error("field of {points} lattice points needs ~{required_bytes} bytes, cap is {cap_bytes}")]
    MemoryCap {
        points: usize,
        required_bytes: u64,
        cap_bytes: u64,
    },

    /// A box is not covered by the sampled field region.
    #[error("box [{lo}, {hi}] (axis {axis}) not covered by sampled region [-{sampled}, {sampled}]")]
    BoxNotCovered {
        axis: usize,
        lo: f64,
        hi: f64,
        sampled: f64,
    },

    /// Eigensolver failed to reach the residual tolerance (numeric, exit 3).
    #[error("eigensolver did not converge: {achieved:?} residuals after {iterations} iterations (tol {tol})")]
    EigenNoConvergence {
        iterations: usize,
        tol: f64,
        achieved: Vec<f64>,
    },

    /// Inner linear solve failed.
    #[error("conjugate gradient stalled at relative residual {residual} after {iterations} iterations")]
    CgNoConvergence { iterations: usize, residual: f64 },

    /// Monte Carlo weights collapsed onto too few paths.
    #[error("effective sample size {ess:.2} below the floor of {floor} ({paths} paths)")]
    WeightDegeneracy { ess: f64, floor: f64, paths: usize },

    /// Every path left the domain before the horizon.
    #[error("all {paths} paths exited the box before t = {t}")]
    AllPathsExited { paths: usize, t: f64 },

    /// Free-space paths wandered outside the sampled field too often.
    #[error("{fraction:.4} of paths left the sampled region (limit {limit}); enlarge the field box")]
    ExitBudgetExceeded { fraction: f64, limit: f64 },

    /// Spectral truncation cannot meet the trace tolerance.
    #[error("spectral truncation too short: k = {k} keeps relative tail {tail:.3e} (need < {need:.1e})")]
    TruncationInsufficient { k: usize, tail: f64, need: f64 },

    /// Variational flow did not settle.
    #[error("variational flow did not converge: relative change {change:.3e} after {iterations} iterations")]
    FlowNoConvergence { iterations: usize, change: f64 },

    /// Underlying I/O error.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure is a configuration/validation problem rather
    /// than a numerical one. Drives the process exit code.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::KernelUnresolvable { .. }
                | Error::MemoryCap { .. }
                | Error::BoxNotCovered { .. }
        )
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
