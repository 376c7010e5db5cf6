//! Seeded generators for random desk-scale instances: unit-mean laws,
//! mean-preserving spreads, simplex points, and small chains.
//!
//! These feed both the property suites and the CLI sweep experiments, so
//! they live in the library rather than in test code. All functions are
//! deterministic given the caller's RNG state.

use rand::{Rng, RngExt};

use crate::chains::MarginalChain;
use crate::weightdist::{DiscreteDistribution, SimplexWeights};

/// Unit-mean law with 1..=max_atoms atoms, all at least `floor` apart from 0.
///
/// Atoms are scaled so the mean is exactly one (up to rounding), which keeps
/// them strictly positive whenever `floor > 0`.
pub fn random_unit_mean_law(rng: &mut impl Rng, max_atoms: usize, floor: f64) -> DiscreteDistribution {
    let k = rng.random_range(1..=max_atoms);
    let mut atoms: Vec<f64> = (0..k).map(|_| rng.random_range(floor + 0.05..3.0)).collect();
    let probs = random_prob_vector(rng, k);
    let mean: f64 = atoms.iter().zip(&probs).map(|(a, p)| a * p).sum();
    for a in &mut atoms {
        *a /= mean;
    }
    DiscreteDistribution::new(atoms, probs).expect("generated law is valid")
}

/// Unit-mean law supported inside `[a, b]` (requires `a < 1 < b`).
///
/// Probability mass is shifted between an atom below 1 and an atom above 1
/// to hit the mean exactly, so the support bounds are never violated.
pub fn random_unit_mean_law_on(
    rng: &mut impl Rng,
    max_atoms: usize,
    a: f64,
    b: f64,
) -> DiscreteDistribution {
    assert!(a < 1.0 && 1.0 < b);
    'retry: loop {
        let k = rng.random_range(2..=max_atoms.max(2));
        let mut atoms: Vec<f64> = (0..k).map(|_| rng.random_range(a..b)).collect();
        atoms.sort_by(f64::total_cmp);
        if !(atoms[0] < 1.0 && *atoms.last().unwrap() > 1.0) {
            continue 'retry;
        }
        let mut probs = random_prob_vector(rng, k);
        let mean: f64 = atoms.iter().zip(&probs).map(|(x, p)| x * p).sum();
        // move mass between the outermost atoms to fix the mean
        let (lo, hi) = (0, k - 1);
        let delta = (1.0 - mean) / (atoms[hi] - atoms[lo]);
        probs[hi] += delta;
        probs[lo] -= delta;
        if probs[lo] < 0.0 || probs[hi] < 0.0 {
            continue 'retry;
        }
        return DiscreteDistribution::new(atoms, probs).expect("generated law is valid");
    }
}

/// Law on `[a, b]` with mean exactly `mu` and a random feasible variance,
/// built from three atoms whose probabilities solve the moment equations.
pub fn random_law_with_moments(rng: &mut impl Rng, mu: f64, a: f64, b: f64) -> DiscreteDistribution {
    assert!(a < mu && mu < b);
    loop {
        let x1 = rng.random_range(a..mu);
        let x3 = rng.random_range(mu..b);
        let x2 = rng.random_range(x1..x3);
        if x2 - x1 < 1e-6 || x3 - x2 < 1e-6 {
            continue;
        }
        let s2 = rng.random_range(0.0..(mu - x1) * (x3 - mu));
        // solve p1 + p2 + p3 = 1, sum p x = mu, sum p x^2 = s2 + mu^2
        let m2 = s2 + mu * mu;
        let det = (x2 - x1) * (x3 - x1) * (x3 - x2);
        if det.abs() < 1e-9 {
            continue;
        }
        let p1 = ((x2 * x3) - (x2 + x3) * mu + m2) / ((x2 - x1) * (x3 - x1));
        let p3 = ((x1 * x2) - (x1 + x2) * mu + m2) / ((x3 - x1) * (x3 - x2));
        let p2 = 1.0 - p1 - p3;
        if p1 >= 1e-9 && p2 >= 1e-9 && p3 >= 1e-9 {
            return DiscreteDistribution::new(vec![x1, x2, x3], vec![p1, p2, p3])
                .expect("moment-matched law is valid");
        }
    }
}

/// One mean-preserving spread: replaces a random atom `w` by the pair
/// `{w - d, w + d}` with equal halves of its probability. The result is
/// always above the input in the convex order.
pub fn mean_preserving_spread(
    rng: &mut impl Rng,
    q: &DiscreteDistribution,
    floor: f64,
) -> DiscreteDistribution {
    let idx = rng.random_range(0..q.len());
    let w = q.atoms()[idx];
    let room = w - floor;
    if room <= 1e-9 {
        return q.clone();
    }
    let d = rng.random_range(0.05 * room..0.9 * room);
    let mut atoms = Vec::with_capacity(q.len() + 1);
    let mut probs = Vec::with_capacity(q.len() + 1);
    for (i, (&a, &p)) in q.atoms().iter().zip(q.probs()).enumerate() {
        if i == idx {
            atoms.push(w - d);
            probs.push(p / 2.0);
            atoms.push(w + d);
            probs.push(p / 2.0);
        } else {
            atoms.push(a);
            probs.push(p);
        }
    }
    DiscreteDistribution::new(atoms, probs).expect("spread law is valid")
}

/// Chain of `steps` mean-preserving spreads with atoms kept at or above 0.
pub fn mean_preserving_spread_chain(
    rng: &mut impl Rng,
    q: &DiscreteDistribution,
    steps: usize,
) -> DiscreteDistribution {
    mean_preserving_spread_chain_floored(rng, q, steps, 0.0)
}

/// Chain of spreads with atoms kept at or above `floor` (use a positive
/// floor when the law feeds a kernel and must avoid zero weights).
pub fn mean_preserving_spread_chain_floored(
    rng: &mut impl Rng,
    q: &DiscreteDistribution,
    steps: usize,
    floor: f64,
) -> DiscreteDistribution {
    let mut out = q.clone();
    for _ in 0..steps {
        out = mean_preserving_spread(rng, &out, floor);
    }
    out
}

/// Random point of the probability simplex.
pub fn random_simplex_point(rng: &mut impl Rng, n: usize) -> SimplexWeights {
    SimplexWeights::new(random_prob_vector(rng, n)).expect("normalized vector is on the simplex")
}

/// A simplex point that majorizes `a` (mass moved from smaller to larger
/// entries, making the vector more concentrated).
pub fn spread_simplex(rng: &mut impl Rng, a: &SimplexWeights, steps: usize) -> SimplexWeights {
    let mut v = a.entries().to_vec();
    let n = v.len();
    for _ in 0..steps {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let (hi, lo) = if v[i] >= v[j] { (i, j) } else { (j, i) };
        let d = rng.random_range(0.0..=v[lo]);
        v[hi] += d;
        v[lo] -= d;
    }
    SimplexWeights::new(v).expect("mass moves preserve the simplex")
}

/// A simplex point majorized by `a` (mass moved from larger to smaller
/// entries without overshooting, flattening the vector).
pub fn flatten_simplex(rng: &mut impl Rng, a: &SimplexWeights, steps: usize) -> SimplexWeights {
    let mut v = a.entries().to_vec();
    let n = v.len();
    for _ in 0..steps {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let (hi, lo) = if v[i] >= v[j] { (i, j) } else { (j, i) };
        let d = rng.random_range(0.0..=(v[hi] - v[lo]) / 2.0);
        v[hi] -= d;
        v[lo] += d;
    }
    SimplexWeights::new(v).expect("mass moves preserve the simplex")
}

/// Diatomic unit-mean law `{a -> (b-1)/(b-a), b -> (1-a)/(b-a)}` with
/// `0 <= a <= 1 <= b`; the two-point family used throughout the variance
/// comparisons.
pub fn counterexample_law(a: f64, b: f64) -> DiscreteDistribution {
    assert!((0.0..=1.0).contains(&a) && b >= 1.0 && b > a);
    DiscreteDistribution::new(vec![a, b], vec![(b - 1.0) / (b - a), (1.0 - a) / (b - a)])
        .expect("diatomic law is valid")
}

/// The two-state perfect independence sampler: uniform target, proposals
/// drawn from the target itself.
pub fn counterexample_chain() -> MarginalChain {
    MarginalChain::new(
        vec!["-1".into(), "+1".into()],
        vec![0.5, 0.5],
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    )
    .expect("two-state chain is valid")
}

/// Random fully-supported chain on `n` states: positive target, strictly
/// positive proposal rows (so the acceptance ratio is finite everywhere).
pub fn random_chain(rng: &mut impl Rng, n: usize) -> MarginalChain {
    let pi = random_prob_vector_bounded(rng, n, 0.05);
    let q = (0..n).map(|_| random_prob_vector_bounded(rng, n, 0.05)).collect();
    let states = (0..n).map(|i| format!("s{i}")).collect();
    MarginalChain::new(states, pi, q).expect("generated chain is valid")
}

/// Per-state weight pair `(Q1, Q2)` with `Q1 <=cx Q2`, strictly positive
/// atoms, built by spreading a random base law.
pub fn random_cx_weight_pair(
    rng: &mut impl Rng,
    max_atoms: usize,
) -> (DiscreteDistribution, DiscreteDistribution) {
    let q1 = random_unit_mean_law(rng, max_atoms, 0.2);
    let steps = rng.random_range(1..=3);
    let q2 = mean_preserving_spread_chain_floored(rng, &q1, steps, 0.02);
    (q1, q2)
}

/// Random values for a function on `n` states, in `[-1, 1]`.
pub fn random_function(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_prob_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-12..1.0f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn random_prob_vector_bounded(rng: &mut impl Rng, n: usize, min_entry: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(min_entry..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weightdist::{convex_order_leq, majorizes, CxVerdict};
    use rand::SeedableRng;

    #[test]
    fn generated_laws_have_unit_mean() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(1);
        for _ in 0..50 {
            assert!(random_unit_mean_law(&mut rng, 4, 0.1).is_unit_mean());
            assert!(random_unit_mean_law_on(&mut rng, 4, 0.2, 2.5).is_unit_mean());
        }
    }

    #[test]
    fn moment_sampler_hits_targets() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(2);
        for _ in 0..50 {
            let q = random_law_with_moments(&mut rng, 1.0, 0.0, 4.0);
            assert!((q.mean() - 1.0).abs() < 1e-10);
            assert!(q.min_atom() >= 0.0 && q.max_atom() <= 4.0);
        }
    }

    #[test]
    fn simplex_moves_majorize() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_simplex_point(&mut rng, 5);
            let spread = spread_simplex(&mut rng, &a, 3);
            let flat = flatten_simplex(&mut rng, &a, 3);
            assert!(majorizes(a.entries(), spread.entries()).unwrap());
            assert!(majorizes(flat.entries(), a.entries()).unwrap());
        }
    }

    #[test]
    fn cx_pairs_are_ordered() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(4);
        for _ in 0..50 {
            let (q1, q2) = random_cx_weight_pair(&mut rng, 4);
            assert_eq!(convex_order_leq(&q1, &q2), CxVerdict::Holds);
            assert!(q1.min_atom() > 0.0 && q2.min_atom() > 0.0);
        }
    }
}
