//! Numerical tolerances shared across the crate.
//!
//! Every threshold the kernel and learner compare against lives here so the
//! defaults can be audited in one place.

/// Row sums of a stochastic matrix, and the total mass of a distribution, must be
/// within this distance of their target.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Entries down to this negative value are treated as rounding noise and clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-14;

/// Maximum `|p^T P - p^T|` accepted from the stationary solver.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Singular-value ratio below which the augmented stationary system is rank deficient.
pub const STATIONARY_RCOND: f64 = 1e-12;

/// Largest chain solved by a direct linear solve; bigger chains use power iteration.
pub const DIRECT_SOLVE_MAX_N: usize = 64;

/// Power-iteration convergence threshold on the L1 change between iterates.
pub const POWER_ITERATION_TOL: f64 = 1e-12;

/// Power-iteration step cap.
pub const POWER_ITERATION_MAX_STEPS: usize = 1_000_000;

/// Residual allowed in `Z (I - (P - P_inf)) = I`.
pub const FUNDAMENTAL_RESIDUAL_TOL: f64 = 1e-8;

/// Default cap on the number of simplex points the grid learner will enumerate.
pub const DEFAULT_GRID_BUDGET: u128 = 1_000_000;

/// Ridge strength used by least squares when the design is rank deficient.
pub const LS_RIDGE: f64 = 1e-8;

/// Relative singular-value cutoff used by least-squares rank checks.
pub const LS_RCOND: f64 = 1e-10;
