//! Inner solvers: a three-dual-block Chambolle–Pock iteration for the image
//! subproblem and backtracking accelerated proximal gradient for the filter
//! subproblem.

mod apg;
mod cp;
mod opnorm;

use serde::{Deserialize, Serialize};

pub use apg::{solve_filter_step, FilterProblem, FilterStepOutcome};
pub use cp::{solve_image_step, CpDuals, ImageProblem, ImageStepOutcome};
pub use opnorm::{estimate_operator_norm, OPNORM_SAFETY};

/// Caps and tolerances shared by both inner solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerOptions {
    pub max_cp_iter: usize,
    pub max_apg_iter: usize,
    /// Relative change `‖u⁺ − u‖ / ‖u⁺‖` below which an inner solver stops.
    pub tol: f64,
    /// Objective is evaluated (and traced) every this many iterations.
    pub check_every: usize,
    /// Power iterations for the CP operator norm.
    pub norm_iterations: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            max_cp_iter: 300,
            max_apg_iter: 300,
            tol: 1e-5,
            check_every: 25,
            norm_iterations: 20,
        }
    }
}

/// One line of the optional JSON-lines solver trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub solver: String,
    pub k: usize,
    pub t: usize,
    pub image: Option<usize>,
    pub objective: f64,
    pub primal_change: f64,
    pub step: f64,
}

/// Objective growth factor (relative to the starting value) treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
