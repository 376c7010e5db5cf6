//! Exact finite-state analysis of pseudo-marginal Metropolis-Hastings
//! algorithms under the convex order of their weight distributions.
//!
//! The library constructs exact matrix realizations of the marginal,
//! pseudo-marginal, refreshed-ratio (penalty) and coupled kernels on finite
//! state spaces, together with the spectral machinery (Dirichlet forms,
//! spectral gaps, asymptotic variances) needed to compare them. Orderings
//! that hold in theory - acceptance rates, Dirichlet forms, asymptotic
//! variances and gap bounds under convex-ordered weights - become checkable
//! matrix statements here.
//!
//! Module map:
//! - [`weightdist`]: finite weight laws, stop-loss functions, the convex
//!   order, majorization, averaging laws and extremal distributions;
//! - [`coupling`]: martingale couplings realizing the convex order;
//! - [`chains`]: kernel constructions and acceptance functionals;
//! - [`spectral`]: gaps, asymptotic variances and variational checks;
//! - [`samplers`]: seeded Monte Carlo runs and batch-means estimation;
//! - [`abc`]: stratified ABC estimator laws and g-and-k machinery;
//! - [`gen`]: seeded random instance generators for sweeps and tests.

pub mod abc;
pub mod chains;
pub mod coupling;
pub mod gen;
pub mod numeric;
pub mod samplers;
pub mod spectral;
pub mod weightdist;

/// Formats a float with 12 significant digits in scientific notation;
/// the fixed format used by every CSV the crate writes.
pub fn fmt_sig12(x: f64) -> String {
    format!("{x:.11e}")
}
