//! Tolerance table.
//!
//! Every threshold used for input validation, convergence control and
//! post-condition checks lives here so that tests and front ends agree on
//! the same numbers.

/// Hermiticity check on inputs, absolute Frobenius defect ‖M − M†‖_F.
pub const HERMITIAN: f64 = 1e-10;

/// Unitarity check on inputs, ‖U†U − I‖_F.
pub const UNITARY: f64 = 1e-10;

/// Density-matrix check on inputs: trace deviation and most negative eigenvalue.
pub const DENSITY: f64 = 1e-10;

/// Normalization of initial state vectors.
pub const STATE_NORM: f64 = 1e-10;

/// Row sums of the jump distribution and zero row sums of the generator.
pub const ROW_SUM: f64 = 1e-12;

/// Maximum entry change allowed when the integrator step is halved.
pub const STEP_HALVING: f64 = 1e-9;

/// Maximum number of step halvings before integration is declared failed.
pub const MAX_HALVINGS: u32 = 24;

/// Relative tolerance used to decide whether a requested time is a grid point.
pub const GRID_MATCH: f64 = 1e-12;

/// Relative spacing deviation tolerated on a "uniform" grid.
pub const UNIFORM_GRID: f64 = 1e-9;

/// Imaginary residual discarded from expectation values of Hermitian observables.
pub const IMAGINARY_RESIDUAL: f64 = 1e-10;

/// Residual ‖M·R − I‖_F accepted for computed inverses.
pub const INVERSE_RESIDUAL: f64 = 1e-10;

/// Condition estimate above which a linear solve is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Conservation checks along trajectories and averaged solutions.
pub const TRACE_DRIFT: f64 = 1e-9;
pub const HERMITICITY_DEFECT: f64 = 1e-9;
pub const NORM_DRIFT: f64 = 1e-9;
pub const MIN_EIGENVALUE: f64 = -1e-7;

/// Monte Carlo / ODE agreement: |mean − ode| ≤ Z_LIMIT · max(stderr, STDERR_FLOOR).
pub const Z_LIMIT: f64 = 5.0;

/// Standard errors below this are treated as this value when forming
/// z-scores. Entries that are deterministic along every path (zero sample
/// variance) would otherwise turn floating-point rounding into infinite z.
pub const STDERR_FLOOR: f64 = 1e-9;
