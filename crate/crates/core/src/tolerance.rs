//! Tolerance ladder shared by the suites.

/// Identities that jets evaluate without truncation error.
pub const JET_EXACT: f64 = 1e-9;
/// Jet-exact identities that pass through longer derivative chains.
pub const JET_CHAIN: f64 = 1e-8;
/// Agreement with finite-difference oracles.
pub const FINITE_DIFFERENCE: f64 = 1e-5;
/// Lower bound a negative control has to exceed.
pub const NEGATIVE_CONTROL: f64 = 1e-3;
/// Membership of a vector in `H`, relative to the sizes of `theta0` and the vector.
pub const IN_H: f64 = 1e-10;
/// Membership of a point in the moment zero set.
pub const IN_S: f64 = 1e-10;
/// Positive-definiteness margin for Gram matrices.
pub const POSITIVITY: f64 = 1e-9;
/// Smallest acceptable `|theta0|`.
pub const NONVANISHING: f64 = 1e-12;
/// Relative pivot threshold in jet Gaussian elimination.
pub const PIVOT: f64 = 1e-12;
/// Smallest singular value accepted in least-squares and push-down solves.
pub const SINGULAR: f64 = 1e-8;
/// Exact equalities that only suffer rounding.
pub const ROUNDING: f64 = 1e-12;
