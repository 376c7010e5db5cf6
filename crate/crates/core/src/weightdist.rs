//! Finite-support weight distributions on the nonnegative reals.
//!
//! Houses the laws of normalized density estimators: stop-loss functions,
//! the convex order decided exactly at stop-loss breakpoints, majorization
//! of averaging weights, exact laws of weighted averages, and the extremal
//! (minimal/maximal) laws under support and variance constraints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Atoms closer than this are merged during canonicalization.
pub const ATOM_MERGE_TOL: f64 = 1e-12;
/// Probabilities must sum to one within this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Weight laws feeding kernels must have unit mean within this tolerance.
pub const UNIT_MEAN_TOL: f64 = 1e-10;
/// Two laws are mean-comparable for the convex order within this tolerance.
pub const MEAN_MATCH_TOL: f64 = 1e-9;
/// Slack allowed in stop-loss comparisons.
pub const STOP_LOSS_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum WeightDistError {
    #[error("atoms ({atoms}) and probs ({probs}) have different lengths")]
    LengthMismatch { atoms: usize, probs: usize },
    #[error("distribution needs at least one atom")]
    Empty,
    #[error("negative probability {value:.3e} at index {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("negative atom {value:.3e} at index {index}")]
    NegativeAtom { index: usize, value: f64 },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("probabilities sum to {sum} (must be 1 within {PROB_SUM_TOL:.0e})")]
    NotNormalized { sum: f64 },
    #[error("law must have unit mean, got {mean}")]
    NotUnitMean { mean: f64 },
    #[error("vectors have different lengths ({left} vs {right})")]
    VectorLengthMismatch { left: usize, right: usize },
    #[error("simplex entries sum to {sum} (must be 1) or leave [0,1]")]
    NotASimplexPoint { sum: f64 },
    #[error("averaging over {components} components with support {support} exceeds the enumeration cap")]
    CombinatorialCap { components: usize, support: usize },
    #[error("constraint interval violated: need {a} <= {mu} <= {b}")]
    MeanOutsideSupport { mu: f64, a: f64, b: f64 },
    #[error("variance {sigma2} outside the feasible interval [0, {max}]")]
    InfeasibleVariance { sigma2: f64, max: f64 },
}

/// A finite-support probability law on `[0, inf)`.
///
/// Canonical by construction: atoms strictly increasing, near-duplicates
/// merged, zero-probability atoms dropped, probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscreteDistribution")]
pub struct DiscreteDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDiscreteDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDiscreteDistribution> for DiscreteDistribution {
    type Error = WeightDistError;
    fn try_from(raw: RawDiscreteDistribution) -> Result<Self, Self::Error> {
        DiscreteDistribution::new(raw.atoms, raw.probs)
    }
}

impl DiscreteDistribution {
    /// Builds a canonical law from atom/probability lists.
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self, WeightDistError> {
        if atoms.len() != probs.len() {
            return Err(WeightDistError::LengthMismatch {
                atoms: atoms.len(),
                probs: probs.len(),
            });
        }
        if atoms.is_empty() {
            return Err(WeightDistError::Empty);
        }
        for (i, (&a, &p)) in atoms.iter().zip(&probs).enumerate() {
            if !a.is_finite() || !p.is_finite() {
                return Err(WeightDistError::NonFinite { index: i });
            }
            if p < -1e-15 {
                return Err(WeightDistError::NegativeProbability { index: i, value: p });
            }
            if a < -1e-15 {
                return Err(WeightDistError::NegativeAtom { index: i, value: a });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(WeightDistError::NotNormalized { sum });
        }

        let mut pairs: Vec<(f64, f64)> = atoms
            .into_iter()
            .zip(probs)
            .map(|(a, p)| (a.max(0.0), p.max(0.0)))
            .filter(|&(_, p)| p > 0.0)
            .collect();
        if pairs.is_empty() {
            return Err(WeightDistError::Empty);
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

        let mut merged_atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut merged_probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, p) in pairs {
            match merged_atoms.last() {
                Some(&last) if a - last <= ATOM_MERGE_TOL => {
                    let lp = *merged_probs.last().unwrap();
                    // probability-weighted representative keeps the mean exact
                    let idx = merged_atoms.len() - 1;
                    merged_atoms[idx] = (last * lp + a * p) / (lp + p);
                    merged_probs[idx] = lp + p;
                }
                _ => {
                    merged_atoms.push(a);
                    merged_probs.push(p);
                }
            }
        }
        Ok(Self { atoms: merged_atoms, probs: merged_probs })
    }

    /// Point mass at `w`.
    pub fn delta(w: f64) -> Self {
        Self::new(vec![w], vec![1.0]).expect("point mass is always valid")
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a canonical law always carries at least one atom
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(a, p)| a * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .zip(&self.probs)
            .map(|(a, p)| p * (a - m) * (a - m))
            .sum()
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms[0]
    }

    pub fn max_atom(&self) -> f64 {
        *self.atoms.last().unwrap()
    }

    pub fn is_unit_mean(&self) -> bool {
        (self.mean() - 1.0).abs() <= UNIT_MEAN_TOL
    }

    pub fn require_unit_mean(&self) -> Result<(), WeightDistError> {
        if self.is_unit_mean() {
            Ok(())
        } else {
            Err(WeightDistError::NotUnitMean { mean: self.mean() })
        }
    }

    /// Stop-loss transform `t -> E[(W - t)_+]`.
    ///
    /// Nonincreasing and convex in `t`; equals `mean - t` left of the support
    /// and vanishes right of it.
    pub fn stop_loss(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.probs)
            .map(|(&a, &p)| p * (a - t).max(0.0))
            .sum()
    }

    /// Law of `c * W` for `c > 0`.
    pub fn scale(&self, c: f64) -> Self {
        assert!(c > 0.0, "scale factor must be positive");
        Self::new(self.atoms.iter().map(|a| a * c).collect(), self.probs.clone())
            .expect("scaling preserves validity")
    }
}

/// Verdict of a convex-order comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CxVerdict {
    /// `Q1 <=cx Q2`.
    Holds,
    /// Means match but some stop-loss value of `Q1` exceeds `Q2`'s.
    Fails,
    /// Means differ beyond tolerance; the laws are not comparable.
    MeansDiffer,
}

impl CxVerdict {
    pub fn holds(self) -> bool {
        self == CxVerdict::Holds
    }
}

/// Decides `Q1 <=cx Q2` exactly for finite laws.
///
/// Both stop-loss functions are piecewise linear with kinks only at atoms,
/// so comparing them on the union of the two atom sets decides the order.
pub fn convex_order_leq(q1: &DiscreteDistribution, q2: &DiscreteDistribution) -> CxVerdict {
    if (q1.mean() - q2.mean()).abs() > MEAN_MATCH_TOL {
        return CxVerdict::MeansDiffer;
    }
    for &t in q1.atoms().iter().chain(q2.atoms()) {
        if q1.stop_loss(t) > q2.stop_loss(t) + STOP_LOSS_TOL {
            return CxVerdict::Fails;
        }
    }
    CxVerdict::Holds
}

/// A point of the probability simplex; averaging weights over replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights {
    entries: Vec<f64>,
}

impl SimplexWeights {
    pub fn new(entries: Vec<f64>) -> Result<Self, WeightDistError> {
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL
            || entries.iter().any(|&e| !(-1e-15..=1.0 + 1e-12).contains(&e))
        {
            return Err(WeightDistError::NotASimplexPoint { sum });
        }
        Ok(Self { entries: entries.into_iter().map(|e| e.clamp(0.0, 1.0)).collect() })
    }

    /// `u_k` in `S_n`: the first `k` entries equal `1/k`, the rest zero.
    pub fn uniform_k(n: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= n);
        let mut entries = vec![0.0; n];
        for e in entries.iter_mut().take(k) {
            *e = 1.0 / k as f64;
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Default cap on the number of averaged components.
pub const MAX_AVERAGING_COMPONENTS: usize = 8;
/// Default cap on the enumeration size `|support|^N`.
pub const MAX_ENUMERATION: u64 = 1_000_000;

/// Exact law of the convex combination `sum_i lambda_i Z_i` with `Z_i` iid
/// from `q`, computed by repeated convolution with atom merging.
pub fn averaged_law(
    q: &DiscreteDistribution,
    lambda: &SimplexWeights,
) -> Result<DiscreteDistribution, WeightDistError> {
    q.require_unit_mean()?;
    let n = lambda.len();
    let s = q.len() as u64;
    let cap_hit = n > MAX_AVERAGING_COMPONENTS
        || s.checked_pow(n as u32).is_none_or(|total| total > MAX_ENUMERATION);
    if cap_hit {
        return Err(WeightDistError::CombinatorialCap { components: n, support: q.len() });
    }

    let mut acc: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for &lam in lambda.entries() {
        if lam == 0.0 {
            continue;
        }
        let mut next = Vec::with_capacity(acc.len() * q.len());
        for &(a, p) in &acc {
            for (&w, &pw) in q.atoms().iter().zip(q.probs()) {
                next.push((a + lam * w, p * pw));
            }
        }
        acc = merge_pairs(next);
    }
    let (atoms, probs): (Vec<f64>, Vec<f64>) = acc.into_iter().unzip();
    DiscreteDistribution::new(atoms, probs)
}

fn merge_pairs(mut pairs: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (a, p) in pairs {
        match out.last_mut() {
            Some(last) if a - last.0 <= ATOM_MERGE_TOL => {
                last.0 = (last.0 * last.1 + a * p) / (last.1 + p);
                last.1 += p;
            }
            _ => out.push((a, p)),
        }
    }
    out
}

/// Majorization `lambda < mu` via descending partial sums.
///
/// True iff every partial sum of the descending rearrangement of `lambda`
/// is dominated by the corresponding sum for `mu` (tolerance 1e-12).
pub fn majorizes(lambda: &[f64], mu: &[f64]) -> Result<bool, WeightDistError> {
    if lambda.len() != mu.len() {
        return Err(WeightDistError::VectorLengthMismatch { left: lambda.len(), right: mu.len() });
    }
    let mut l = lambda.to_vec();
    let mut m = mu.to_vec();
    l.sort_by(|a, b| b.total_cmp(a));
    m.sort_by(|a, b| b.total_cmp(a));
    let (mut sl, mut sm) = (0.0, 0.0);
    for (a, b) in l.iter().zip(&m) {
        sl += a;
        sm += b;
        if sl > sm + 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Minimal and maximal unit-of-`mu` laws on `[a, b]` for the convex order.
///
/// The point mass at the mean is minimal; the two-point law on the interval
/// endpoints is maximal. For `a == b` both collapse to the point mass.
pub fn extremal_bounded(
    mu: f64,
    a: f64,
    b: f64,
) -> Result<(DiscreteDistribution, DiscreteDistribution), WeightDistError> {
    if !(a <= mu && mu <= b) {
        return Err(WeightDistError::MeanOutsideSupport { mu, a, b });
    }
    let min = DiscreteDistribution::delta(mu);
    if b - a <= ATOM_MERGE_TOL {
        return Ok((min.clone(), min));
    }
    let max = DiscreteDistribution::new(vec![a, b], vec![(b - mu) / (b - a), (mu - a) / (b - a)])?;
    Ok((min, max))
}

/// Result of the variance-constrained stop-loss maximization.
#[derive(Debug, Clone)]
pub struct VarConstrainedMax {
    /// Maximal value of `E[(W - t)_+]` over laws with the given moments.
    pub value: f64,
    /// The diatomic law attaining it.
    pub law: DiscreteDistribution,
}

/// Maximal stop-loss at `t` over laws on `[a, b]` with mean `mu` and
/// variance `sigma2`, together with the attaining two-point law.
///
/// The four regimes are selected by comparing `sigma_mu(t)` against the
/// distances to the interval endpoints; on regime boundaries the formulas
/// agree by continuity and the first matching regime is used.
pub fn extremal_var_constrained(
    mu: f64,
    sigma2: f64,
    a: f64,
    b: f64,
    t: f64,
) -> Result<VarConstrainedMax, WeightDistError> {
    if !(a <= mu && mu <= b) {
        return Err(WeightDistError::MeanOutsideSupport { mu, a, b });
    }
    let max_var = (mu - a) * (b - mu);
    if !(0.0..=max_var + 1e-12).contains(&sigma2) {
        return Err(WeightDistError::InfeasibleVariance { sigma2, max: max_var });
    }
    if sigma2 <= 1e-15 {
        return Ok(VarConstrainedMax {
            value: (mu - t).max(0.0),
            law: DiscreteDistribution::delta(mu),
        });
    }

    let diatomic = |x1: f64, x2: f64| -> Result<DiscreteDistribution, WeightDistError> {
        let p2 = (mu - x1) / (x2 - x1);
        DiscreteDistribution::new(vec![x1, x2], vec![1.0 - p2, p2])
    };
    // every law in the class has stop-loss mu - t left of the support and 0
    // to the right of it
    if t <= a {
        return Ok(VarConstrainedMax { value: mu - t, law: diatomic(a, mu + sigma2 / (mu - a))? });
    }
    if t >= b {
        return Ok(VarConstrainedMax { value: 0.0, law: diatomic(mu - sigma2 / (b - mu), b)? });
    }

    let sigma_t = (sigma2 + (mu - t) * (mu - t)).sqrt();
    let c = (a + b) / 2.0;
    let (value, law) = if t <= c {
        if sigma_t <= t - a {
            (0.5 * (mu - t + sigma_t), diatomic(t - sigma_t, t + sigma_t)?)
        } else {
            let value =
                (mu - a) * ((mu - t) * (mu - a) + sigma2) / ((mu - a) * (mu - a) + sigma2);
            (value, diatomic(a, mu + sigma2 / (mu - a))?)
        }
    } else if sigma_t <= b - t {
        (0.5 * (mu - t + sigma_t), diatomic(t - sigma_t, t + sigma_t)?)
    } else {
        let value = (b - t) * sigma2 / ((mu - b) * (mu - b) + sigma2);
        (value, diatomic(mu - sigma2 / (b - mu), b)?)
    };
    Ok(VarConstrainedMax { value, law })
}

/// Cdf of the supremal unit-mean law with variance parameter `sigma2` on
/// `[0, inf)`: the pointwise limit of variance-constrained maximizers as the
/// support bound grows.
pub fn supremal_cdf(sigma2: f64, t: f64) -> f64 {
    assert!(sigma2 > 0.0, "sigma2 must be positive");
    if t < 0.0 {
        return 0.0;
    }
    let knee = (sigma2 + 1.0) / 2.0;
    if t < knee {
        sigma2 / (1.0 + sigma2)
    } else {
        0.5 + 0.5 * (t - 1.0) / (sigma2 + (1.0 - t) * (1.0 - t)).sqrt()
    }
}

/// Discretization of the unit-mean lognormal `exp(N(-sigma^2/2, sigma^2))`
/// on a symmetric log grid.
///
/// The grid weights are chosen so that the mass at `1/v` equals `v` times
/// the mass at `v`, which makes the law satisfy the reversibility condition
/// of the refreshed-ratio kernels exactly while converging to the lognormal
/// as the grid refines.
pub fn discretized_lognormal(sigma: f64, half_width: f64, points: usize) -> DiscreteDistribution {
    assert!(sigma > 0.0 && half_width > 0.0 && points >= 3);
    let n = points;
    let step = 2.0 * half_width / (n - 1) as f64;
    let mut atoms = Vec::with_capacity(n);
    let mut masses = Vec::with_capacity(n);
    for j in 0..n {
        // enforce exact grid symmetry z_j = -z_{n-1-j}
        let z = if 2 * j + 1 == n {
            0.0
        } else {
            -half_width + step * j as f64
        };
        atoms.push((sigma * z).exp());
        masses.push((-0.5 * z * z - 0.5 * sigma * z).exp());
    }
    let total: f64 = masses.iter().sum();
    let probs = masses.into_iter().map(|m| m / total).collect();
    DiscreteDistribution::new(atoms, probs).expect("lognormal grid law is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn law(atoms: &[f64], probs: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(atoms.to_vec(), probs.to_vec()).unwrap()
    }

    #[test]
    fn canonicalization_merges_and_sorts() {
        let q = law(&[2.0, 0.5, 2.0 + 5e-13], &[0.25, 0.5, 0.25]);
        assert_eq!(q.len(), 2);
        assert!((q.atoms()[0] - 0.5).abs() < 1e-15);
        assert!((q.probs()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DiscreteDistribution::new(vec![1.0], vec![0.9]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![-1.0], vec![1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn stop_loss_examples() {
        assert!((DiscreteDistribution::delta(1.0).stop_loss(0.5) - 0.5).abs() < 1e-15);
        let q = law(&[0.5, 2.0], &[2.0 / 3.0, 1.0 / 3.0]);
        assert!((q.stop_loss(1.0) - 1.0 / 3.0).abs() < 1e-15);
        let q = law(&[0.0, 2.0], &[0.5, 0.5]);
        assert!((q.stop_loss(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cx_order_examples() {
        let q = law(&[0.5, 2.0], &[2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(convex_order_leq(&DiscreteDistribution::delta(1.0), &q), CxVerdict::Holds);
        assert_eq!(convex_order_leq(&q, &q), CxVerdict::Holds);

        // diatomic unit-mean pair whose stop-loss curves cross
        let w1 = gen::counterexample_law(0.9208, 3.0046);
        let w2 = gen::counterexample_law(0.6698, 1.4620);
        assert_eq!(convex_order_leq(&w1, &w2), CxVerdict::Fails);
        assert_eq!(convex_order_leq(&w2, &w1), CxVerdict::Fails);
        assert!(w1.variance() > w2.variance());

        let shifted = law(&[0.6, 2.1], &[2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(convex_order_leq(&q, &shifted), CxVerdict::MeansDiffer);
    }

    #[test]
    fn averaging_examples() {
        let q = law(&[0.0, 2.0], &[0.5, 0.5]);
        let avg = averaged_law(&q, &SimplexWeights::uniform_k(2, 2)).unwrap();
        assert_eq!(avg.atoms(), &[0.0, 1.0, 2.0]);
        assert!((avg.probs()[0] - 0.25).abs() < 1e-15);
        assert!((avg.probs()[1] - 0.5).abs() < 1e-15);

        let degenerate = averaged_law(&q, &SimplexWeights::uniform_k(4, 1)).unwrap();
        assert_eq!(degenerate, q);
    }

    #[test]
    fn averaging_uniform_weights_are_cx_monotone() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(11);
        for _ in 0..20 {
            let q = gen::random_unit_mean_law(&mut rng, 3, 0.05);
            let more = averaged_law(&q, &SimplexWeights::uniform_k(2, 2)).unwrap();
            let fewer = averaged_law(&q, &SimplexWeights::uniform_k(2, 1)).unwrap();
            assert_eq!(convex_order_leq(&more, &fewer), CxVerdict::Holds);
        }
    }

    #[test]
    fn averaging_cap() {
        let q = law(&[0.5, 1.0, 1.5], &[0.25, 0.5, 0.25]);
        let lam = SimplexWeights::new(vec![0.1; 10]).unwrap();
        assert!(matches!(
            averaged_law(&q, &lam),
            Err(WeightDistError::CombinatorialCap { .. })
        ));
    }

    #[test]
    fn majorizes_examples() {
        assert!(majorizes(&[0.5, 0.5], &[2.0 / 3.0, 1.0 / 3.0]).unwrap());
        assert!(!majorizes(&[0.5, 0.3, 0.2], &[0.4, 0.4, 0.2]).unwrap());
        // u_N is majorized by every simplex point
        let any = [0.7, 0.1, 0.05, 0.15];
        assert!(majorizes(&[0.25; 4], &any).unwrap());
        assert!(majorizes(&any, &any).unwrap());
        assert!(majorizes(&[0.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn extremal_bounded_examples() {
        let (min, max) = extremal_bounded(1.0, 0.5, 2.0).unwrap();
        assert_eq!(min, DiscreteDistribution::delta(1.0));
        assert_eq!(max.atoms(), &[0.5, 2.0]);
        assert!((max.probs()[0] - 2.0 / 3.0).abs() < 1e-15);

        let (min, max) = extremal_bounded(1.0, 1.0, 1.0).unwrap();
        assert_eq!(min, max);
        assert!(extremal_bounded(1.0, 1.2, 2.0).is_err());
    }

    #[test]
    fn extremal_bounded_dominates_random_laws() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(5);
        for _ in 0..200 {
            let (a, b) = (0.3, 2.5);
            let q = gen::random_unit_mean_law_on(&mut rng, 4, a, b);
            let (min, max) = extremal_bounded(1.0, a, b).unwrap();
            assert!(convex_order_leq(&min, &q).holds());
            assert!(convex_order_leq(&q, &max).holds());
        }
    }

    #[test]
    fn var_constrained_examples() {
        // regime t >= c with sigma_mu(t) <= b - t
        let r = extremal_var_constrained(1.0, 0.25, 0.0, 4.0, 2.0).unwrap();
        let expect = 0.5 * (-1.0 + 1.25f64.sqrt());
        assert!((r.value - expect).abs() < 1e-12);
        assert!((r.law.atoms()[0] - (2.0 - 1.25f64.sqrt())).abs() < 1e-12);
        assert!((r.law.atoms()[1] - (2.0 + 1.25f64.sqrt())).abs() < 1e-12);
        assert!((r.law.mean() - 1.0).abs() < 1e-12);
        assert!((r.law.variance() - 0.25).abs() < 1e-12);

        // regime t <= c with sigma_mu(t) >= t - a; stop-loss at 0 is the mean
        let r = extremal_var_constrained(1.0, 0.25, 0.0, 4.0, 0.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.law.atoms(), &[0.0, 1.25]);

        let r = extremal_var_constrained(1.0, 0.25, 0.0, 4.0, 4.0).unwrap();
        assert!(r.value.abs() < 1e-15);

        assert!(extremal_var_constrained(1.0, 5.0, 0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn var_constrained_regime_boundaries_agree() {
        // at t = c both middle regimes produce the same value
        let (mu, s2, a, b) = (1.0, 0.3, 0.2, 3.0);
        let c = (a + b) / 2.0;
        let below = extremal_var_constrained(mu, s2, a, b, c - 1e-9).unwrap();
        let above = extremal_var_constrained(mu, s2, a, b, c + 1e-9).unwrap();
        assert!((below.value - above.value).abs() < 1e-7);

        // at sigma_mu(t) = t - a the first two rows agree; solve for t
        // sigma^2 + (mu-t)^2 = (t-a)^2 => t = (s2 + mu^2 - a^2) / (2 (mu - a))
        let t_star = (s2 + mu * mu - a * a) / (2.0 * (mu - a));
        if t_star <= c {
            let lo = extremal_var_constrained(mu, s2, a, b, t_star - 1e-9).unwrap();
            let hi = extremal_var_constrained(mu, s2, a, b, t_star + 1e-9).unwrap();
            assert!((lo.value - hi.value).abs() < 1e-7);
        }
    }

    #[test]
    fn var_constrained_law_attains_value() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(23);
        for _ in 0..200 {
            let (mu, a, b) = (1.0, 0.0, 4.0);
            let s2: f64 = rand::RngExt::random_range(&mut rng, 0.01..(mu - a) * (b - mu) * 0.99);
            let t: f64 = rand::RngExt::random_range(&mut rng, a..b);
            let r = extremal_var_constrained(mu, s2, a, b, t).unwrap();
            assert!((r.law.mean() - mu).abs() < 1e-10);
            assert!((r.law.variance() - s2).abs() < 1e-9);
            assert!((r.law.stop_loss(t) - r.value).abs() < 1e-10);
        }
    }

    #[test]
    fn supremal_cdf_examples() {
        assert!((supremal_cdf(1.0, 0.5) - 0.5).abs() < 1e-15);
        assert!((supremal_cdf(1.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((supremal_cdf(1.0, 3.0) - (0.5 + 1.0 / 5.0f64.sqrt())).abs() < 1e-12);
        // nondecreasing, -> 1
        let mut last = 0.0;
        for i in 0..200 {
            let t = i as f64 * 0.25;
            let v = supremal_cdf(1.0, t);
            assert!(v + 1e-15 >= last);
            last = v;
        }
        assert!(supremal_cdf(1.0, 1e8) > 1.0 - 1e-7);
    }

    #[test]
    fn discretized_lognormal_is_unit_mean() {
        for sigma in [0.25, 1.0, 2.0] {
            let q = discretized_lognormal(sigma, 6.0, 41);
            assert!(q.is_unit_mean());
        }
    }

    #[test]
    fn serde_canonicalizes_on_load() {
        let json = r#"{"atoms":[2.0,0.5,0.5],"probs":[0.25,0.25,0.5]}"#;
        let q: DiscreteDistribution = serde_json::from_str(json).unwrap();
        assert_eq!(q.atoms(), &[0.5, 2.0]);
        assert!((q.probs()[0] - 0.75).abs() < 1e-15);
        let round: DiscreteDistribution =
            serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(round, q);
        assert!(serde_json::from_str::<DiscreteDistribution>(r#"{"atoms":[1.0],"probs":[0.5]}"#)
            .is_err());
    }

    proptest! {
        #[test]
        fn stop_loss_shape(seed in 0u64..500) {
            let mut rng = rand_pcg::Pcg64::seed_from_u64(seed);
            let q = gen::random_unit_mean_law(&mut rng, 5, 0.05);
            let lo = q.min_atom();
            let hi = q.max_atom();
            // left of support: mean - t; right: zero
            prop_assert!((q.stop_loss(lo - 0.5) - (q.mean() - (lo - 0.5))).abs() < 1e-12);
            prop_assert!(q.stop_loss(hi + 0.5).abs() < 1e-15);
            // convex and nonincreasing on a random triple
            let t1 = rand::RngExt::random_range(&mut rng, lo - 1.0..hi + 1.0);
            let dt = rand::RngExt::random_range(&mut rng, 0.01..1.0);
            let (s0, s1, s2) = (q.stop_loss(t1), q.stop_loss(t1 + dt), q.stop_loss(t1 + 2.0 * dt));
            prop_assert!(s1 <= s0 + 1e-12);
            prop_assert!(s0 + s2 - 2.0 * s1 >= -1e-12);
        }

        #[test]
        fn spread_chains_are_cx_ordered(seed in 0u64..500) {
            let mut rng = rand_pcg::Pcg64::seed_from_u64(seed);
            let q1 = gen::random_unit_mean_law(&mut rng, 4, 0.05);
            let q2 = gen::mean_preserving_spread_chain(&mut rng, &q1, 3);
            prop_assert_eq!(convex_order_leq(&q1, &q2), CxVerdict::Holds);
            // cx order implies the variance order
            prop_assert!(q1.variance() <= q2.variance() + 1e-10);
        }

        #[test]
        fn majorization_is_a_partial_order(seed in 0u64..200) {
            let mut rng = rand_pcg::Pcg64::seed_from_u64(seed);
            let n = 4usize;
            let a = gen::random_simplex_point(&mut rng, n);
            let b = gen::spread_simplex(&mut rng, &a, 2); // a < b by construction
            let c = gen::spread_simplex(&mut rng, &b, 2);
            prop_assert!(majorizes(a.entries(), a.entries()).unwrap());
            prop_assert!(majorizes(a.entries(), b.entries()).unwrap());
            prop_assert!(majorizes(b.entries(), c.entries()).unwrap());
            prop_assert!(majorizes(a.entries(), c.entries()).unwrap());
            // antisymmetry up to permutation: mutual domination forces equal
            // descending rearrangements
            if majorizes(b.entries(), a.entries()).unwrap() {
                let mut x = a.entries().to_vec();
                let mut y = b.entries().to_vec();
                x.sort_by(|p, q| q.total_cmp(p));
                y.sort_by(|p, q| q.total_cmp(p));
                for (p, q) in x.iter().zip(&y) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn var_constrained_dominates_matching_laws(seed in 0u64..300) {
            let mut rng = rand_pcg::Pcg64::seed_from_u64(seed);
            let (a, b) = (0.0, 4.0);
            let q = gen::random_law_with_moments(&mut rng, 1.0, a, b);
            let s2 = q.variance();
            let t = rand::RngExt::random_range(&mut rng, a..b);
            let r = extremal_var_constrained(1.0, s2, a, b, t).unwrap();
            prop_assert!(r.value >= q.stop_loss(t) - 1e-9);
        }
    }
}
