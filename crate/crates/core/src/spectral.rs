//! Exact spectral and variance analysis of finite reversible kernels.
//!
//! The asymptotic variance is computed three ways (spectral form, resolvent
//! solve, truncated autocorrelation sum) and the first two cross-check each
//! other on every call with `lambda < 1`.

use serde::Serialize;
use thiserror::Error;

use crate::chains::{ChainError, FiniteKernel};
use crate::numeric::{solve_linear, symmetric_eigen, NumericError};

/// Reversibility violations above this disqualify a kernel from the
/// spectral operations.
pub const REVERSIBILITY_TOL: f64 = 1e-9;
/// Eigenvalues within this of 1 count as the trivial eigenvalue.
pub const UNIT_EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("kernel is not reversible for its claimed invariant (violation {violation:.3e})")]
    NotReversible { violation: f64 },
    #[error("state {index} carries no stationary mass; spectral form undefined")]
    ZeroMassState { index: usize },
    #[error("lambda = {lambda} outside the allowed range")]
    LambdaOutOfRange { lambda: f64 },
    #[error("function must be centered (mean {mean:.3e})")]
    NotCentered { mean: f64 },
    #[error("asymptotic variance is infinite or ill-defined: the chain is reducible and f charges a second unit eigenvector")]
    IllDefinedVariance,
    #[error("kernels do not share an invariant (max difference {max_diff:.3e})")]
    InvariantMismatch { max_diff: f64 },
    #[error("independent computations disagree: {a} vs {b}")]
    CrossCheckFailed { a: f64, b: f64 },
    #[error("function has length {got}, kernel has {expected} states")]
    LengthMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Right/left/absolute spectral gaps with the full sorted spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    /// `1 - lambda_2`, distance of the nontrivial spectrum from +1.
    pub right_gap: f64,
    /// `1 + lambda_min`, distance from -1.
    pub left_gap: f64,
    pub absolute_gap: f64,
    /// All eigenvalues, descending (the leading one is the trivial 1).
    pub eigenvalues: Vec<f64>,
}

/// Largest detailed-balance violation `|mu_i K_ij - mu_j K_ji|`.
pub fn check_reversibility(k: &FiniteKernel) -> f64 {
    let n = k.n();
    let mu = k.invariant();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((mu[i] * k.entry(i, j) - mu[j] * k.entry(j, i)).abs());
        }
    }
    worst
}

fn require_reversible(k: &FiniteKernel) -> Result<(), SpectralError> {
    let violation = check_reversibility(k);
    if violation > REVERSIBILITY_TOL {
        return Err(SpectralError::NotReversible { violation });
    }
    Ok(())
}

fn require_len(k: &FiniteKernel, f: &[f64]) -> Result<(), SpectralError> {
    if f.len() != k.n() {
        return Err(SpectralError::LengthMismatch { got: f.len(), expected: k.n() });
    }
    Ok(())
}

/// `<f, g>_mu`.
pub fn mu_dot(mu: &[f64], f: &[f64], g: &[f64]) -> f64 {
    mu.iter().zip(f).zip(g).map(|((&m, &a), &b)| m * a * b).sum()
}

/// `mu(f)`.
pub fn mu_mean(mu: &[f64], f: &[f64]) -> f64 {
    mu.iter().zip(f).map(|(&m, &a)| m * a).sum()
}

/// `f - mu(f)`.
pub fn center(mu: &[f64], f: &[f64]) -> Vec<f64> {
    let m = mu_mean(mu, f);
    f.iter().map(|&v| v - m).collect()
}

/// `var_mu(f)`.
pub fn variance_under(mu: &[f64], f: &[f64]) -> f64 {
    let c = center(mu, f);
    mu_dot(mu, &c, &c)
}

/// `K f`.
pub fn apply(k: &FiniteKernel, f: &[f64]) -> Vec<f64> {
    k.matrix().iter().map(|row| row.iter().zip(f).map(|(&p, &v)| p * v).sum()).collect()
}

/// Dirichlet form `E_K(f) = <f, (I-K) f>_mu`, evaluated both as the
/// half-sum of squared increments and as the quadratic form.
pub fn dirichlet_form(k: &FiniteKernel, f: &[f64]) -> Result<f64, SpectralError> {
    require_reversible(k)?;
    require_len(k, f)?;
    let mu = k.invariant();
    let mut double_sum = 0.0;
    for i in 0..k.n() {
        for j in 0..k.n() {
            let d = f[i] - f[j];
            double_sum += mu[i] * k.entry(i, j) * d * d;
        }
    }
    double_sum *= 0.5;
    let kf = apply(k, f);
    let quad: f64 = (0..k.n()).map(|i| mu[i] * f[i] * (f[i] - kf[i])).sum();
    if (double_sum - quad).abs() > 1e-10 * double_sum.abs().max(1.0) {
        return Err(SpectralError::CrossCheckFailed { a: double_sum, b: quad });
    }
    Ok(double_sum)
}

/// Eigen-coordinates of a kernel in the symmetrized geometry: sorted
/// eigenvalues and the coefficients of `D^{1/2} f` on the eigenvectors.
fn eigen_coefficients(
    k: &FiniteKernel,
    f: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), SpectralError> {
    let n = k.n();
    let mu = k.invariant();
    if let Some(index) = mu.iter().position(|&m| m <= 0.0) {
        return Err(SpectralError::ZeroMassState { index });
    }
    let sqrt_mu: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            s[i][j] = sqrt_mu[i] * k.entry(i, j) / sqrt_mu[j];
        }
    }
    // symmetrize against roundoff; the asymmetry is bounded by the
    // detailed-balance violation scaled by the smallest masses
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (s[i][j] + s[j][i]);
            s[i][j] = avg;
            s[j][i] = avg;
        }
    }
    let (values, vectors) = symmetric_eigen(&s)?;
    let h: Vec<f64> = (0..n).map(|i| sqrt_mu[i] * f[i]).collect();
    let coeffs: Vec<f64> =
        vectors.iter().map(|v| v.iter().zip(&h).map(|(&a, &b)| a * b).sum()).collect();
    Ok((values, coeffs))
}

/// Right, left and absolute spectral gaps via the symmetrized
/// eigendecomposition.
pub fn spectral_gaps(k: &FiniteKernel) -> Result<SpectralReport, SpectralError> {
    require_reversible(k)?;
    let (values, _) = eigen_coefficients(k, &vec![0.0; k.n()])?;
    let (right_gap, left_gap) = if values.len() == 1 {
        // no nontrivial spectrum: the infimum over an empty set; both gaps
        // take the largest possible value
        (2.0, 2.0)
    } else {
        (1.0 - values[1], 1.0 + values[values.len() - 1])
    };
    Ok(SpectralReport {
        right_gap,
        left_gap,
        absolute_gap: right_gap.min(left_gap),
        eigenvalues: values,
    })
}

fn spectral_variance(values: &[f64], coeffs: &[f64], lambda: f64) -> Result<f64, SpectralError> {
    let h_norm2: f64 = coeffs.iter().map(|c| c * c).sum();
    let mut var = 0.0;
    let mut trivial_seen = false;
    for (&ev, &c) in values.iter().zip(coeffs) {
        if ev >= 1.0 - UNIT_EIGEN_TOL {
            if c * c > 1e-14 * h_norm2.max(1e-30) {
                return Err(SpectralError::IllDefinedVariance);
            }
            trivial_seen = true;
            continue;
        }
        var += c * c * (1.0 + lambda * ev) / (1.0 - lambda * ev);
    }
    debug_assert!(trivial_seen, "a stochastic kernel always has eigenvalue 1");
    Ok(var)
}

/// Asymptotic variance `var(f, lambda K)` for `lambda in [0, 1]`.
///
/// For `lambda < 1` the resolvent is solved directly and the spectral form
/// must agree within 1e-9; at `lambda = 1` the spectral form is the value,
/// erroring out when a reducible chain makes it ill-defined.
pub fn asymptotic_variance(
    k: &FiniteKernel,
    f: &[f64],
    lambda: f64,
) -> Result<f64, SpectralError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(SpectralError::LambdaOutOfRange { lambda });
    }
    require_reversible(k)?;
    require_len(k, f)?;
    let mu = k.invariant();
    let fbar = center(mu, f);
    let (values, coeffs) = eigen_coefficients(k, &fbar)?;
    let spectral = spectral_variance(&values, &coeffs, lambda)?;
    if lambda < 1.0 {
        let g = resolvent_solve_centered(k, &fbar, lambda)?;
        let direct = 2.0 * mu_dot(mu, &fbar, &g) - mu_dot(mu, &fbar, &fbar);
        if (direct - spectral).abs() > 1e-9 * direct.abs().max(1.0) {
            return Err(SpectralError::CrossCheckFailed { a: direct, b: spectral });
        }
        Ok(direct)
    } else {
        Ok(spectral)
    }
}

fn resolvent_solve_centered(
    k: &FiniteKernel,
    fbar: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, SpectralError> {
    let n = k.n();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { 0.0 } - lambda * k.entry(i, j);
        }
    }
    let mut g = solve_linear(&a, fbar)?;
    // (1 - lambda) mu(g) = mu(f) = 0, so g is centered up to roundoff
    let m = mu_mean(k.invariant(), &g);
    for v in &mut g {
        *v -= m;
    }
    Ok(g)
}

/// Solves `(I - lambda K) g = f` for centered `f` and `lambda < 1`.
pub fn resolvent_solve(
    k: &FiniteKernel,
    f: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, SpectralError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(SpectralError::LambdaOutOfRange { lambda });
    }
    require_reversible(k)?;
    require_len(k, f)?;
    let mean = mu_mean(k.invariant(), f);
    if mean.abs() > 1e-9 * f.iter().fold(1.0f64, |a, &b| a.max(b.abs())) {
        return Err(SpectralError::NotCentered { mean });
    }
    resolvent_solve_centered(k, f, lambda)
}

/// Report of the variational-optimum check for the resolvent.
#[derive(Debug, Clone, Serialize)]
pub struct BellmanReport {
    /// `2 <f, g*> - <g*, A g*>` at the resolvent solution `g*`.
    pub objective_at_solution: f64,
    /// `<f, A^{-1} f>`, the value the supremum must attain.
    pub quadratic_form: f64,
    /// Largest objective seen over the random perturbations.
    pub max_perturbed: f64,
    pub trials: usize,
    pub passes: bool,
}

/// Checks that the resolvent attains `sup_g [2<f,g> - <g,Ag>]` with
/// `A = I - lambda K`, and that random perturbations never beat it.
pub fn bellman_check(
    k: &FiniteKernel,
    f: &[f64],
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<BellmanReport, SpectralError> {
    use rand::{RngExt, SeedableRng};
    let g_star = resolvent_solve(k, f, lambda)?;
    let mu = k.invariant();
    let objective = |g: &[f64]| -> f64 {
        let kg = apply(k, g);
        let ag: Vec<f64> = g.iter().zip(&kg).map(|(&gi, &kgi)| gi - lambda * kgi).collect();
        2.0 * mu_dot(mu, f, g) - mu_dot(mu, g, &ag)
    };
    let at_solution = objective(&g_star);
    let quadratic_form = mu_dot(mu, f, &g_star);
    let scale = quadratic_form.abs().max(1.0);

    let mut rng = rand_pcg::Pcg64::seed_from_u64(seed);
    let mut max_perturbed = f64::NEG_INFINITY;
    for _ in 0..trials {
        let eps: f64 = rng.random_range(1e-4..1.0);
        let g: Vec<f64> =
            g_star.iter().map(|&v| v + eps * rng.random_range(-1.0..1.0)).collect();
        max_perturbed = max_perturbed.max(objective(&g));
    }
    let passes = (at_solution - quadratic_form).abs() <= 1e-10 * scale
        && max_perturbed <= at_solution + 1e-12 * scale;
    Ok(BellmanReport {
        objective_at_solution: at_solution,
        quadratic_form,
        max_perturbed,
        trials,
        passes,
    })
}

/// The two-sided variational bracket between Dirichlet-form differences and
/// the asymptotic-variance difference at `lambda < 1`.
#[derive(Debug, Clone, Serialize)]
pub struct BracketReport {
    /// `E_{lK1}(f1^) - E_{lK2}(f1^)` at the first resolvent.
    pub lower: f64,
    /// `(var(f, lK2) - var(f, lK1)) / 2`.
    pub mid: f64,
    /// The same difference at the second resolvent.
    pub upper: f64,
    pub holds: bool,
}

fn require_same_invariant(k1: &FiniteKernel, k2: &FiniteKernel) -> Result<(), SpectralError> {
    if k1.n() != k2.n() {
        return Err(SpectralError::LengthMismatch { got: k2.n(), expected: k1.n() });
    }
    let max_diff = k1
        .invariant()
        .iter()
        .zip(k2.invariant())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if max_diff > 1e-12 {
        return Err(SpectralError::InvariantMismatch { max_diff });
    }
    Ok(())
}

/// Verifies the bracket
/// `E_{lK1}(f1^) - E_{lK2}(f1^) <= (var(f,lK2) - var(f,lK1))/2
///  <= E_{lK1}(f2^) - E_{lK2}(f2^)` for same-invariant reversible pairs.
pub fn peskun_bracket_check(
    k1: &FiniteKernel,
    k2: &FiniteKernel,
    f: &[f64],
    lambda: f64,
) -> Result<BracketReport, SpectralError> {
    require_same_invariant(k1, k2)?;
    require_reversible(k1)?;
    require_reversible(k2)?;
    let mu = k1.invariant();
    let fbar = center(mu, f);
    let f1 = resolvent_solve_centered(k1, &fbar, lambda)?;
    let f2 = resolvent_solve_centered(k2, &fbar, lambda)?;
    let damped_dirichlet = |k: &FiniteKernel, g: &[f64]| -> f64 {
        let kg = apply(k, g);
        let ag: Vec<f64> = g.iter().zip(&kg).map(|(&gi, &kgi)| gi - lambda * kgi).collect();
        mu_dot(mu, g, &ag)
    };
    let lower = damped_dirichlet(k1, &f1) - damped_dirichlet(k2, &f1);
    let upper = damped_dirichlet(k1, &f2) - damped_dirichlet(k2, &f2);
    let norm2 = mu_dot(mu, &fbar, &fbar);
    let var1 = 2.0 * mu_dot(mu, &fbar, &f1) - norm2;
    let var2 = 2.0 * mu_dot(mu, &fbar, &f2) - norm2;
    let mid = 0.5 * (var2 - var1);
    let holds = lower <= mid + 1e-9 && mid <= upper + 1e-9;
    Ok(BracketReport { lower, mid, upper, holds })
}

/// One row per mixture coefficient in the convexity check.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureRow {
    pub beta: f64,
    pub var_mixture: f64,
    pub convex_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixtureReport {
    pub rows: Vec<MixtureRow>,
    pub holds: bool,
}

/// Checks `var(f, beta K1 + (1-beta) K2) <= beta var(f,K1) + (1-beta) var(f,K2)`
/// at each requested `beta` (asymptotic variance at lambda = 1).
pub fn mixture_convexity_check(
    k1: &FiniteKernel,
    k2: &FiniteKernel,
    f: &[f64],
    betas: &[f64],
) -> Result<MixtureReport, SpectralError> {
    require_same_invariant(k1, k2)?;
    let v1 = asymptotic_variance(k1, f, 1.0)?;
    let v2 = asymptotic_variance(k2, f, 1.0)?;
    let mut rows = Vec::with_capacity(betas.len());
    let mut holds = true;
    for &beta in betas {
        if !(0.0..=1.0).contains(&beta) {
            return Err(SpectralError::LambdaOutOfRange { lambda: beta });
        }
        let n = k1.n();
        let matrix: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| beta * k1.entry(i, j) + (1.0 - beta) * k2.entry(i, j))
                    .collect()
            })
            .collect();
        let mixture =
            FiniteKernel::new(k1.labels().to_vec(), matrix, k1.invariant().to_vec())?;
        let var_mixture = asymptotic_variance(&mixture, f, 1.0)?;
        let convex_bound = beta * v1 + (1.0 - beta) * v2;
        if var_mixture > convex_bound + 1e-9 {
            holds = false;
        }
        rows.push(MixtureRow { beta, var_mixture, convex_bound });
    }
    Ok(MixtureReport { rows, holds })
}

/// Truncated autocorrelation form of the asymptotic variance:
/// `var_mu(f) + 2 sum_{j=1}^{lag_max} <fbar, K^j fbar>_mu`.
pub fn truncated_acf_variance(
    k: &FiniteKernel,
    f: &[f64],
    lag_max: usize,
) -> Result<f64, SpectralError> {
    require_reversible(k)?;
    require_len(k, f)?;
    let mu = k.invariant();
    let fbar = center(mu, f);
    let mut acc = mu_dot(mu, &fbar, &fbar);
    let mut g = fbar.clone();
    for _ in 0..lag_max {
        g = apply(k, &g);
        acc += 2.0 * mu_dot(mu, &fbar, &g);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{marginal_mh_kernel, pseudo_marginal_kernel, WeightAssignment};
    use crate::gen;
    use rand::SeedableRng;

    fn two_state_symmetric(p: f64) -> FiniteKernel {
        FiniteKernel::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0 - p, p], vec![p, 1.0 - p]],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    fn iid_kernel(mu: &[f64]) -> FiniteKernel {
        let n = mu.len();
        FiniteKernel::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec![mu.to_vec(); n],
            mu.to_vec(),
        )
        .unwrap()
    }

    fn identity_kernel(n: usize) -> FiniteKernel {
        let matrix: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        FiniteKernel::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            matrix,
            vec![1.0 / n as f64; n],
        )
        .unwrap()
    }

    #[test]
    fn reversibility_detects_cycles() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(20);
        let chain = gen::random_chain(&mut rng, 3);
        assert!(check_reversibility(&marginal_mh_kernel(&chain)) < 1e-12);

        let cyclic = FiniteKernel::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
            ],
            vec![1.0 / 3.0; 3],
        )
        .unwrap();
        assert!(check_reversibility(&cyclic) > 0.1);
        assert!(matches!(
            dirichlet_form(&cyclic, &[1.0, 0.0, -1.0]),
            Err(SpectralError::NotReversible { .. })
        ));
    }

    #[test]
    fn dirichlet_form_examples() {
        assert!(dirichlet_form(&identity_kernel(3), &[1.0, -1.0, 2.0]).unwrap().abs() < 1e-15);

        // iid kernel gives the variance
        let mu = [0.2, 0.3, 0.5];
        let f = [1.0, -1.0, 0.5];
        let e = dirichlet_form(&iid_kernel(&mu), &f).unwrap();
        assert!((e - variance_under(&mu, &f)).abs() < 1e-12);

        // 2-state symmetric kernel with p = 0.25 and f = (+1, -1):
        // both routes give 2p
        let e = dirichlet_form(&two_state_symmetric(0.25), &[1.0, -1.0]).unwrap();
        assert!((e - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gaps_examples() {
        let r = spectral_gaps(&identity_kernel(3)).unwrap();
        assert!(r.right_gap.abs() < 1e-12);

        let r = spectral_gaps(&iid_kernel(&[0.25, 0.25, 0.5])).unwrap();
        assert!((r.right_gap - 1.0).abs() < 1e-12);
        assert!((r.left_gap - 1.0).abs() < 1e-12);
        assert!((r.absolute_gap - 1.0).abs() < 1e-12);

        let r = spectral_gaps(&two_state_symmetric(0.25)).unwrap();
        assert!((r.eigenvalues[0] - 1.0).abs() < 1e-13);
        assert!((r.eigenvalues[1] - 0.5).abs() < 1e-13);
        assert!((r.right_gap - 0.5).abs() < 1e-13);
    }

    #[test]
    fn asymptotic_variance_examples() {
        // iid chain: uncorrelated samples
        let mu = [0.3, 0.2, 0.5];
        let f = [2.0, -1.0, 0.3];
        let v = asymptotic_variance(&iid_kernel(&mu), &f, 1.0).unwrap();
        assert!((v - variance_under(&mu, &f)).abs() < 1e-12);

        // closed form (1 + l2) / (1 - l2) for the symmetric two-state chain
        let v = asymptotic_variance(&two_state_symmetric(0.25), &[1.0, -1.0], 1.0).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reducible_chain_is_rejected_at_lambda_one() {
        let k = identity_kernel(2);
        assert!(matches!(
            asymptotic_variance(&k, &[1.0, -1.0], 1.0),
            Err(SpectralError::IllDefinedVariance)
        ));
    }

    #[test]
    fn resolvent_examples() {
        let mu = [0.25, 0.25, 0.25, 0.25];
        let k = iid_kernel(&mu);
        let f = center(&mu, &[1.0, 2.0, -1.0, 0.5]);
        // lambda = 0 returns f; iid kernel annihilates centered f
        let g = resolvent_solve(&k, &f, 0.0).unwrap();
        for (a, b) in g.iter().zip(&f) {
            assert!((a - b).abs() < 1e-14);
        }
        let g = resolvent_solve(&k, &f, 0.7).unwrap();
        for (a, b) in g.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }

        // residual check on a random reversible kernel at lambda = 0.99
        let mut rng = rand_pcg::Pcg64::seed_from_u64(21);
        let chain = gen::random_chain(&mut rng, 5);
        let k = marginal_mh_kernel(&chain);
        let f = center(k.invariant(), &gen::random_function(&mut rng, 5));
        let g = resolvent_solve(&k, &f, 0.99).unwrap();
        let kg = apply(&k, &g);
        for i in 0..5 {
            let residual = g[i] - 0.99 * kg[i] - f[i];
            assert!(residual.abs() < 1e-11);
        }

        assert!(resolvent_solve(&k, &f, 1.0).is_err());
        assert!(resolvent_solve(&k, &[1.0, 1.0, 1.0, 1.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn bellman_optimum_is_unbeaten() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(22);
        for trial in 0..10 {
            let chain = gen::random_chain(&mut rng, 4);
            let k = marginal_mh_kernel(&chain);
            let f = center(k.invariant(), &gen::random_function(&mut rng, 4));
            let report = bellman_check(&k, &f, 0.9, 200, 1000 + trial).unwrap();
            assert!(report.passes, "{report:?}");
            // zero is always admissible and never better
            assert!(report.objective_at_solution >= -1e-12);
        }
    }

    #[test]
    fn bracket_trivial_cases() {
        let k = two_state_symmetric(0.25);
        let f = [1.0, -1.0];
        let r = peskun_bracket_check(&k, &k, &f, 0.9).unwrap();
        assert!(r.lower.abs() < 1e-12 && r.mid.abs() < 1e-12 && r.upper.abs() < 1e-12);
        assert!(r.holds);

        let r = peskun_bracket_check(&k, &two_state_symmetric(0.4), &f, 0.0).unwrap();
        assert!(r.lower.abs() < 1e-12 && r.mid.abs() < 1e-12 && r.upper.abs() < 1e-12);
    }

    #[test]
    fn bracket_orders_peskun_dominated_pairs() {
        // two symmetric random-walk kernels: the lazier one is dominated
        let k1 = two_state_symmetric(0.4);
        let k2 = two_state_symmetric(0.2);
        let f = [1.0, -1.0];
        for lambda in [0.5, 0.9, 0.99] {
            let r = peskun_bracket_check(&k1, &k2, &f, lambda).unwrap();
            assert!(r.holds, "bracket failed at lambda {lambda}: {r:?}");
            assert!(r.mid >= -1e-12, "dominating kernel must not have larger variance");
        }
    }

    #[test]
    fn mixture_convexity_trivial_and_random() {
        let k1 = two_state_symmetric(0.4);
        let k2 = two_state_symmetric(0.15);
        let f = [1.0, -1.0];
        let r = mixture_convexity_check(&k1, &k2, &f, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert!(r.holds);
        let v1 = asymptotic_variance(&k1, &f, 1.0).unwrap();
        let v2 = asymptotic_variance(&k2, &f, 1.0).unwrap();
        assert!((r.rows[4].var_mixture - v1).abs() < 1e-9);
        assert!((r.rows[0].var_mixture - v2).abs() < 1e-9);
    }

    #[test]
    fn off_diagonal_domination_orders_variance_and_gap() {
        // lazy versions of a reversible kernel are dominated entrywise off
        // the diagonal; their variances and right gaps must order
        let mut rng = rand_pcg::Pcg64::seed_from_u64(24);
        for _ in 0..25 {
            let n = rand::RngExt::random_range(&mut rng, 2..6);
            let chain = gen::random_chain(&mut rng, n);
            let k1 = marginal_mh_kernel(&chain);
            let beta: f64 = rand::RngExt::random_range(&mut rng, 0.1..0.9);
            let lazy: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            beta * k1.entry(i, j) + if i == j { 1.0 - beta } else { 0.0 }
                        })
                        .collect()
                })
                .collect();
            let k2 =
                FiniteKernel::new(k1.labels().to_vec(), lazy, k1.invariant().to_vec()).unwrap();
            let f = gen::random_function(&mut rng, n);
            let v1 = asymptotic_variance(&k1, &f, 1.0).unwrap();
            let v2 = asymptotic_variance(&k2, &f, 1.0).unwrap();
            assert!(v1 <= v2 + 1e-10);
            let g1 = spectral_gaps(&k1).unwrap().right_gap;
            let g2 = spectral_gaps(&k2).unwrap().right_gap;
            assert!(g1 >= g2 - 1e-12);
        }
    }

    #[test]
    fn acf_variance_converges() {
        let mu = [0.5, 0.5];
        let k = iid_kernel(&mu);
        let f = [1.0, -1.0];
        // lag 0 is the plain variance; iid has no correlations at any lag
        assert!((truncated_acf_variance(&k, &f, 0).unwrap() - 1.0).abs() < 1e-14);
        assert!((truncated_acf_variance(&k, &f, 50).unwrap() - 1.0).abs() < 1e-13);

        let k = two_state_symmetric(0.25);
        let exact = asymptotic_variance(&k, &f, 1.0).unwrap();
        let truncated = truncated_acf_variance(&k, &f, 200).unwrap();
        assert!((truncated - exact).abs() < 1e-8);
    }

    #[test]
    fn three_variance_routes_agree() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(23);
        for _ in 0..10 {
            let n = rand::RngExt::random_range(&mut rng, 2..5);
            let chain = gen::random_chain(&mut rng, n);
            let laws: Vec<_> =
                (0..n).map(|_| gen::random_unit_mean_law(&mut rng, 3, 0.15)).collect();
            let pm =
                pseudo_marginal_kernel(&chain, &WeightAssignment::new(laws).unwrap()).unwrap();
            let f = pm.lift(&gen::random_function(&mut rng, n));

            let exact = asymptotic_variance(&pm.kernel, &f, 1.0).unwrap();
            // resolvent route, linearly extrapolated to lambda = 1
            let v1 = asymptotic_variance(&pm.kernel, &f, 1.0 - 2e-6).unwrap();
            let v2 = asymptotic_variance(&pm.kernel, &f, 1.0 - 1e-6).unwrap();
            let extrapolated = 2.0 * v2 - v1;
            assert!(
                (extrapolated - exact).abs() < 1e-6 * exact.abs().max(1.0),
                "resolvent extrapolation {extrapolated} vs spectral {exact}"
            );
            // truncated autocorrelations with a tail bound from the gap
            let gaps = spectral_gaps(&pm.kernel).unwrap();
            if gaps.absolute_gap > 0.05 {
                let truncated = truncated_acf_variance(&pm.kernel, &f, 2000).unwrap();
                assert!((truncated - exact).abs() < 1e-6 * exact.abs().max(1.0));
            }
        }
    }
}
