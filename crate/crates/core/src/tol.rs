//! Numerical tolerances shared across modules.

/// Row-sum and off-diagonal sign tolerance for Q-matrix validation.
pub const ROW: f64 = 1e-9;

/// Feasibility tolerance for LP solutions and reconstructions.
pub const FEAS: f64 = 1e-9;

/// Coefficients above `-CONE` count as non-negative.
pub const CONE: f64 = 1e-8;

/// Largest accepted condition estimate of a cone basis matrix.
pub const COND_MAX: f64 = 1e10;

/// Relative tail tolerance of the partial-sum series.
pub const TAIL_REL: f64 = 1e-12;

/// Maximal number of partial-sum terms.
pub const R_CAP: usize = 200;

/// Tolerance for declaring the constraint with lower bound `bound` active.
pub fn active(bound: f64) -> f64 {
    1e-7 * (1.0 + bound.abs())
}
