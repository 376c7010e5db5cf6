//! Exact finite-state kernels: marginal Metropolis-Hastings, its
//! pseudo-marginal approximations, refreshed-ratio (penalty) kernels,
//! coupled three-coordinate kernels sharing one invariant, and generic
//! augmented kernels.
//!
//! Construction discipline: off-diagonal entries are assembled exactly from
//! the defining formulas and the diagonal absorbs the remaining mass. Rows
//! are never renormalized; if a row fails to sum to one within 1e-12 the
//! construction reports an error instead of papering over it.

use serde::Serialize;
use std::io::Write;

use thiserror::Error;

use crate::coupling::MartingaleCoupling;
use crate::weightdist::{DiscreteDistribution, WeightDistError};

/// Row sums of a kernel must match 1 within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("target must be strictly positive and sum to 1 (got sum {sum})")]
    InvalidTarget { sum: f64 },
    #[error("proposal row {row} is not a probability vector (sum {sum})")]
    InvalidProposal { row: usize, sum: f64 },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("row {row} sums to {sum}, outside 1 +/- {ROW_SUM_TOL:.0e}; refusing to renormalize")]
    RowSumViolated { row: usize, sum: f64 },
    #[error("matrix entry ({row},{col}) = {value:.3e} is negative beyond roundoff")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("invariant entry {index} is negative or the vector does not sum to 1 (sum {sum})")]
    InvalidInvariant { index: usize, sum: f64 },
    #[error("weight law for state {state}: {source}")]
    BadWeightLaw { state: usize, source: WeightDistError },
    #[error("ring weight law for pair ({x},{y}) has a non-positive atom")]
    NonPositiveRingAtom { x: usize, y: usize },
    #[error("ring reversibility condition violated (max violation {violation:.3e})")]
    RingConditionViolated { violation: f64 },
    #[error("coupling for state {state} fails verification ({detail})")]
    UnverifiedCoupling { state: usize, detail: String },
    #[error("off-diagonal split disagrees with the base kernel at ({row},{col})")]
    OffdiagMismatch { row: usize, col: usize },
    #[error("off-diagonal split leaves diagonal remainder {value} outside [0,1] at state {row}")]
    BadDiagonalRemainder { row: usize, value: f64 },
    #[error("auxiliary kernel row {row} is not a probability vector (sum {sum})")]
    NuRowNotStochastic { row: usize, sum: f64 },
}

/// A finite state space with target `pi`, proposal matrix `q`, and the
/// induced acceptance ratio `r(x,y)`.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalChain {
    states: Vec<String>,
    pi: Vec<f64>,
    q: Vec<Vec<f64>>,
}

impl MarginalChain {
    pub fn new(states: Vec<String>, pi: Vec<f64>, q: Vec<Vec<f64>>) -> Result<Self, ChainError> {
        let n = states.len();
        if pi.len() != n {
            return Err(ChainError::LengthMismatch { what: "target", got: pi.len(), expected: n });
        }
        if q.len() != n || q.iter().any(|row| row.len() != n) {
            return Err(ChainError::LengthMismatch { what: "proposal", got: q.len(), expected: n });
        }
        let sum: f64 = pi.iter().sum();
        if pi.iter().any(|&p| p <= 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(ChainError::InvalidTarget { sum });
        }
        for (i, row) in q.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(ChainError::InvalidProposal { row: i, sum: s });
            }
        }
        Ok(Self { states, pi, q })
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn q(&self) -> &[Vec<f64>] {
        &self.q
    }

    /// Acceptance ratio `pi(y) q(y,x) / (pi(x) q(x,y))` on the symmetric
    /// set where both proposal directions are possible; zero elsewhere.
    pub fn ratio(&self, x: usize, y: usize) -> f64 {
        if self.q[x][y] > 0.0 && self.q[y][x] > 0.0 {
            self.pi[y] * self.q[y][x] / (self.pi[x] * self.q[x][y])
        } else {
            0.0
        }
    }
}

/// A labeled row-stochastic matrix with its claimed invariant law; the
/// common currency of every spectral operation.
#[derive(Debug, Clone, Serialize)]
pub struct FiniteKernel {
    labels: Vec<String>,
    matrix: Vec<Vec<f64>>,
    invariant: Vec<f64>,
}

impl FiniteKernel {
    pub fn new(
        labels: Vec<String>,
        matrix: Vec<Vec<f64>>,
        invariant: Vec<f64>,
    ) -> Result<Self, ChainError> {
        let n = labels.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(ChainError::LengthMismatch { what: "matrix", got: matrix.len(), expected: n });
        }
        if invariant.len() != n {
            return Err(ChainError::LengthMismatch {
                what: "invariant",
                got: invariant.len(),
                expected: n,
            });
        }
        let mut matrix = matrix;
        for (i, row) in matrix.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if *v < -1e-15 {
                    return Err(ChainError::NegativeEntry { row: i, col: j, value: *v });
                }
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ChainError::RowSumViolated { row: i, sum });
            }
        }
        let inv_sum: f64 = invariant.iter().sum();
        if let Some(index) = invariant.iter().position(|&p| p < 0.0) {
            return Err(ChainError::InvalidInvariant { index, sum: inv_sum });
        }
        if (inv_sum - 1.0).abs() > 1e-10 {
            return Err(ChainError::InvalidInvariant { index: 0, sum: inv_sum });
        }
        Ok(Self { labels, matrix, invariant })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn invariant(&self) -> &[f64] {
        &self.invariant
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i][j]
    }

    /// Writes the dense matrix as CSV: a header of labels, then one row of
    /// 12-significant-digit entries per state.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "state")?;
        for l in &self.labels {
            write!(w, ",{l}")?;
        }
        w.write_all(b"\n")?;
        for (i, row) in self.matrix.iter().enumerate() {
            write!(w, "{}", self.labels[i])?;
            for v in row {
                write!(w, ",{}", crate::fmt_sig12(*v))?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// One unit-mean weight law per state.
#[derive(Debug, Clone)]
pub struct WeightAssignment {
    laws: Vec<DiscreteDistribution>,
}

impl WeightAssignment {
    pub fn new(laws: Vec<DiscreteDistribution>) -> Result<Self, ChainError> {
        for (state, law) in laws.iter().enumerate() {
            law.require_unit_mean().map_err(|source| ChainError::BadWeightLaw { state, source })?;
        }
        Ok(Self { laws })
    }

    /// The same law at every state.
    pub fn uniform(n: usize, law: DiscreteDistribution) -> Result<Self, ChainError> {
        Self::new(vec![law; n])
    }

    /// Point mass at 1 everywhere: the noiseless assignment.
    pub fn noiseless(n: usize) -> Self {
        Self { laws: vec![DiscreteDistribution::delta(1.0); n] }
    }

    pub fn laws(&self) -> &[DiscreteDistribution] {
        &self.laws
    }

    pub fn law(&self, state: usize) -> &DiscreteDistribution {
        &self.laws[state]
    }

    /// States whose law places mass on the zero atom; such weight values
    /// carry no stationary mass and are excluded from kernel state spaces.
    pub fn states_with_zero_atoms(&self) -> Vec<usize> {
        self.laws
            .iter()
            .enumerate()
            .filter(|(_, law)| law.atoms().first().is_some_and(|&a| a == 0.0))
            .map(|(i, _)| i)
            .collect()
    }
}

/// One strictly positive law per ordered pair of distinct states.
#[derive(Debug, Clone)]
pub struct RingWeightAssignment {
    laws: Vec<Vec<DiscreteDistribution>>,
}

impl RingWeightAssignment {
    pub fn new(laws: Vec<Vec<DiscreteDistribution>>) -> Result<Self, ChainError> {
        for (x, row) in laws.iter().enumerate() {
            for (y, law) in row.iter().enumerate() {
                if law.min_atom() <= 0.0 {
                    return Err(ChainError::NonPositiveRingAtom { x, y });
                }
            }
        }
        Ok(Self { laws })
    }

    /// The same law for every pair (it must then be inversion-symmetric in
    /// the weighted sense for the ring condition to hold).
    pub fn uniform(n: usize, law: DiscreteDistribution) -> Result<Self, ChainError> {
        Self::new(vec![vec![law; n]; n])
    }

    /// The two-point family `(delta_a + a delta_{1/a}) / (1+a)` with a
    /// symmetric parameter matrix; satisfies the ring condition exactly.
    pub fn symmetric_diatomic(a: &[Vec<f64>]) -> Result<Self, ChainError> {
        let n = a.len();
        let mut laws = Vec::with_capacity(n);
        for (x, row) in a.iter().enumerate() {
            let mut out = Vec::with_capacity(n);
            for (y, &axy) in row.iter().enumerate() {
                if axy <= 0.0 || (axy - a[y][x]).abs() > 1e-12 {
                    return Err(ChainError::NonPositiveRingAtom { x, y });
                }
                let law = DiscreteDistribution::new(
                    vec![axy, 1.0 / axy],
                    vec![1.0 / (1.0 + axy), axy / (1.0 + axy)],
                )
                .map_err(|source| ChainError::BadWeightLaw { state: x, source })?;
                out.push(law);
            }
            laws.push(out);
        }
        Self::new(laws)
    }

    pub fn n(&self) -> usize {
        self.laws.len()
    }

    pub fn law(&self, x: usize, y: usize) -> &DiscreteDistribution {
        &self.laws[x][y]
    }
}

/// Marginal Metropolis-Hastings kernel: `q(x,y) min{1, r(x,y)}` off the
/// diagonal, rejection mass absorbed on it; reversible with respect to `pi`.
pub fn marginal_mh_kernel(chain: &MarginalChain) -> FiniteKernel {
    let n = chain.n();
    let mut matrix = vec![vec![0.0; n]; n];
    for x in 0..n {
        let mut off = 0.0;
        for y in 0..n {
            if y != x {
                let v = chain.q[x][y] * chain.ratio(x, y).min(1.0);
                matrix[x][y] = v;
                off += v;
            }
        }
        matrix[x][x] = 1.0 - off;
    }
    FiniteKernel::new(chain.states.clone(), matrix, chain.pi.clone())
        .expect("marginal kernel rows sum to 1 by construction")
}

/// Rejection probabilities of the marginal kernel,
/// `rho(x) = 1 - sum_y q(x,y) min{1, r(x,y)}` (the sum includes `y = x`).
pub fn marginal_rejection(chain: &MarginalChain) -> Vec<f64> {
    (0..chain.n())
        .map(|x| {
            let acc: f64 =
                (0..chain.n()).map(|y| chain.q[x][y] * chain.ratio(x, y).min(1.0)).sum();
            1.0 - acc
        })
        .collect()
}

/// A pseudo-marginal kernel together with its state bookkeeping.
#[derive(Debug, Clone)]
pub struct PseudoMarginalKernel {
    pub kernel: FiniteKernel,
    /// `(state, atom index)` for each kernel row, lexicographic.
    pub pairs: Vec<(usize, usize)>,
    /// Rejection probability `rho(x, w)` per kernel row.
    pub rejection: Vec<f64>,
}

impl PseudoMarginalKernel {
    /// Largest rejection probability over the stationary support (every
    /// represented pair carries positive mass).
    pub fn max_rejection(&self) -> f64 {
        self.rejection.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// Lifts a function on marginal states to the paired state space.
    pub fn lift(&self, f: &[f64]) -> Vec<f64> {
        self.pairs.iter().map(|&(x, _)| f[x]).collect()
    }
}

/// Pseudo-marginal kernel on pairs `(x, w)`: proposals draw a fresh weight
/// for the proposed state and accept with `min{1, r(x,y) u / w}`.
///
/// States are pairs of a chain state and a strictly positive weight atom;
/// zero atoms carry no stationary mass and are left out (proposing one is
/// a certain rejection, accounted in the diagonal). The invariant is
/// `pi(x) Q_x(w) w`, under which the kernel is reversible.
pub fn pseudo_marginal_kernel(
    chain: &MarginalChain,
    weights: &WeightAssignment,
) -> Result<PseudoMarginalKernel, ChainError> {
    let n = chain.n();
    if weights.laws().len() != n {
        return Err(ChainError::LengthMismatch {
            what: "weight assignment",
            got: weights.laws().len(),
            expected: n,
        });
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (x, law) in weights.laws().iter().enumerate() {
        for (a, &atom) in law.atoms().iter().enumerate() {
            if atom > 0.0 {
                pairs.push((x, a));
            }
        }
    }
    let m = pairs.len();
    let mut invariant: Vec<f64> = pairs
        .iter()
        .map(|&(x, a)| chain.pi[x] * weights.law(x).probs()[a] * weights.law(x).atoms()[a])
        .collect();
    let total: f64 = invariant.iter().sum();
    for v in &mut invariant {
        *v /= total;
    }

    let mut matrix = vec![vec![0.0; m]; m];
    let mut rejection = vec![0.0; m];
    for (row, &(x, ax)) in pairs.iter().enumerate() {
        let w = weights.law(x).atoms()[ax];
        let mut off = 0.0;
        for (col, &(y, ay)) in pairs.iter().enumerate() {
            if col == row {
                continue;
            }
            let r = chain.ratio(x, y);
            let u = weights.law(y).atoms()[ay];
            let v = chain.q[x][y] * weights.law(y).probs()[ay] * (r * u / w).min(1.0);
            matrix[row][col] = v;
            off += v;
        }
        matrix[row][row] = 1.0 - off;

        // rejection probability sums acceptance over all proposals,
        // including the accepted self-moves absent from the off-diagonal
        let mut accept = 0.0;
        for y in 0..n {
            if chain.q[x][y] == 0.0 {
                continue;
            }
            let r = chain.ratio(x, y);
            let inner: f64 = weights
                .law(y)
                .atoms()
                .iter()
                .zip(weights.law(y).probs())
                .map(|(&u, &pu)| pu * (r * u / w).min(1.0))
                .sum();
            accept += chain.q[x][y] * inner;
        }
        rejection[row] = 1.0 - accept;
    }

    let labels = pairs
        .iter()
        .map(|&(x, a)| format!("{}|w{}", chain.states[x], a))
        .collect();
    let kernel = FiniteKernel::new(labels, matrix, invariant)?;
    Ok(PseudoMarginalKernel { kernel, pairs, rejection })
}

/// Report of the ring reversibility condition check.
#[derive(Debug, Clone, Serialize)]
pub struct RingConditionReport {
    /// Largest atom-mass discrepancy between the weighted law of `Q_xy` and
    /// the inversion pushforward of `Q_yx`, over all ordered pairs.
    pub max_violation: f64,
    pub worst_pair: (usize, usize),
}

impl RingConditionReport {
    pub fn passes(&self) -> bool {
        self.max_violation <= 1e-9
    }
}

/// Verifies, atom by atom, that the weight-tilted law of `Q_xy` matches the
/// pushforward of `Q_yx` under inversion, for every ordered pair.
pub fn check_ring_condition(ring: &RingWeightAssignment) -> RingConditionReport {
    let n = ring.n();
    let mut worst = (0.0f64, (0usize, 0usize));
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let lhs = ring.law(x, y);
            let rhs = ring.law(y, x);
            let mut signed: Vec<(f64, f64)> = Vec::new();
            for (&a, &p) in lhs.atoms().iter().zip(lhs.probs()) {
                signed.push((a, p * a));
            }
            for (&a, &p) in rhs.atoms().iter().zip(rhs.probs()) {
                signed.push((1.0 / a, -p));
            }
            signed.sort_by(|u, v| u.0.total_cmp(&v.0));
            let mut max_here = 0.0f64;
            let mut cluster_atom = f64::NEG_INFINITY;
            let mut cluster_mass: f64 = 0.0;
            for (a, mass) in signed {
                if a - cluster_atom > 1e-9 * a.max(1.0) {
                    max_here = max_here.max(cluster_mass.abs());
                    cluster_atom = a;
                    cluster_mass = mass;
                } else {
                    cluster_mass += mass;
                }
            }
            max_here = max_here.max(cluster_mass.abs());
            if max_here > worst.0 {
                worst = (max_here, (x, y));
            }
        }
    }
    RingConditionReport { max_violation: worst.0, worst_pair: worst.1 }
}

/// Refreshed-ratio kernel on the original states: the acceptance ratio is
/// perturbed afresh by `Q_xy` at every attempt. Requires the ring condition
/// (otherwise reversibility with respect to `pi` is not guaranteed).
pub fn ring_kernel(
    chain: &MarginalChain,
    ring: &RingWeightAssignment,
) -> Result<FiniteKernel, ChainError> {
    let n = chain.n();
    if ring.n() != n {
        return Err(ChainError::LengthMismatch { what: "ring assignment", got: ring.n(), expected: n });
    }
    let report = check_ring_condition(ring);
    if !report.passes() {
        return Err(ChainError::RingConditionViolated { violation: report.max_violation });
    }
    let mut matrix = vec![vec![0.0; n]; n];
    for x in 0..n {
        let mut off = 0.0;
        for y in 0..n {
            if y == x {
                continue;
            }
            let r = chain.ratio(x, y);
            let law = ring.law(x, y);
            let acc: f64 = law
                .atoms()
                .iter()
                .zip(law.probs())
                .map(|(&varpi, &p)| p * (r * varpi).min(1.0))
                .sum();
            let v = chain.q[x][y] * acc;
            matrix[x][y] = v;
            off += v;
        }
        matrix[x][x] = 1.0 - off;
    }
    FiniteKernel::new(chain.states.clone(), matrix, chain.pi.clone())
}

/// Per-pair and expected acceptance of the ring kernel at stationarity.
pub fn ring_acceptance_rates(
    chain: &MarginalChain,
    ring: &RingWeightAssignment,
) -> (Vec<Vec<f64>>, f64) {
    let n = chain.n();
    let mut alpha_xy = vec![vec![0.0; n]; n];
    let mut alpha = 0.0;
    for x in 0..n {
        for y in 0..n {
            let r = chain.ratio(x, y);
            let a = if x == y {
                r.min(1.0)
            } else {
                let law = ring.law(x, y);
                law.atoms().iter().zip(law.probs()).map(|(&v, &p)| p * (r * v).min(1.0)).sum()
            };
            alpha_xy[x][y] = a;
            alpha += chain.pi[x] * chain.q[x][y] * a;
        }
    }
    (alpha_xy, alpha)
}

/// The coupled pair of kernels sharing the invariant
/// `pi(x) R_x(w, v) v`, plus state bookkeeping.
#[derive(Debug, Clone)]
pub struct BreveKernels {
    pub p1: FiniteKernel,
    pub p2: FiniteKernel,
    /// `(state, row atom index, col atom index)` per kernel row.
    pub triples: Vec<(usize, usize, usize)>,
    /// Total mass of `pi(x) R_x(w,v) v` before normalization (1 up to
    /// roundoff when every coupling is a true martingale coupling).
    pub raw_mass: f64,
}

impl BreveKernels {
    /// Lifts a function on marginal states to the triple state space.
    pub fn lift(&self, f: &[f64]) -> Vec<f64> {
        self.triples.iter().map(|&(x, _, _)| f[x]).collect()
    }
}

/// Builds the two coupled kernels from one verified martingale coupling per
/// state. The first moves on `(y, u)` and drags `t` along its conditional
/// given `u`; the second moves on `(y, t)` and drags `u`. Both are
/// reversible with respect to the shared invariant, and marginalizing the
/// dragged coordinate recovers the corresponding pseudo-marginal kernel.
pub fn breve_kernels(
    chain: &MarginalChain,
    couplings: &[MartingaleCoupling],
) -> Result<BreveKernels, ChainError> {
    let n = chain.n();
    if couplings.len() != n {
        return Err(ChainError::LengthMismatch {
            what: "couplings",
            got: couplings.len(),
            expected: n,
        });
    }
    for (state, r) in couplings.iter().enumerate() {
        verify_for_breve(state, r)?;
    }

    let mut triples: Vec<(usize, usize, usize)> = Vec::new();
    for (x, r) in couplings.iter().enumerate() {
        for (i, &w) in r.row_atoms().iter().enumerate() {
            for (j, &v) in r.col_atoms().iter().enumerate() {
                if r.mass(i, j) > 0.0 && w > 0.0 && v > 0.0 {
                    triples.push((x, i, j));
                }
            }
        }
    }
    let m = triples.len();
    let mut invariant: Vec<f64> = triples
        .iter()
        .map(|&(x, i, j)| chain.pi[x] * couplings[x].mass(i, j) * couplings[x].col_atoms()[j])
        .collect();
    let raw_mass: f64 = invariant.iter().sum();
    for v in &mut invariant {
        *v /= raw_mass;
    }

    let mut m1 = vec![vec![0.0; m]; m];
    let mut m2 = vec![vec![0.0; m]; m];
    for (row, &(x, i, j)) in triples.iter().enumerate() {
        let w = couplings[x].row_atoms()[i];
        let v = couplings[x].col_atoms()[j];
        let (mut off1, mut off2) = (0.0, 0.0);
        for (col, &(y, k, l)) in triples.iter().enumerate() {
            if col == row {
                continue;
            }
            let r = chain.ratio(x, y);
            let u = couplings[y].row_atoms()[k];
            let t = couplings[y].col_atoms()[l];
            let mass = couplings[y].mass(k, l);
            let e1 = chain.q[x][y] * mass * (t / u) * (r * u / w).min(1.0);
            let e2 = chain.q[x][y] * mass * (r * t / v).min(1.0);
            m1[row][col] = e1;
            m2[row][col] = e2;
            off1 += e1;
            off2 += e2;
        }
        m1[row][row] = 1.0 - off1;
        m2[row][row] = 1.0 - off2;
    }

    let labels: Vec<String> = triples
        .iter()
        .map(|&(x, i, j)| format!("{}|w{}v{}", chain.states[x], i, j))
        .collect();
    let p1 = FiniteKernel::new(labels.clone(), m1, invariant.clone())?;
    let p2 = FiniteKernel::new(labels, m2, invariant)?;
    Ok(BreveKernels { p1, p2, triples, raw_mass })
}

fn verify_for_breve(state: usize, r: &MartingaleCoupling) -> Result<(), ChainError> {
    let fail = |detail: String| ChainError::UnverifiedCoupling { state, detail };
    if (r.total_mass() - 1.0).abs() > 1e-9 {
        return Err(fail(format!("total mass {}", r.total_mass())));
    }
    for (i, &w) in r.row_atoms().iter().enumerate() {
        let row = &r.joint()[i];
        if row.iter().any(|&p| p < -1e-12) {
            return Err(fail(format!("negative mass in row {i}")));
        }
        let mass: f64 = row.iter().sum();
        let cond: f64 = row.iter().zip(r.col_atoms()).map(|(p, v)| p * v).sum();
        if (cond - w * mass).abs() > 1e-9 {
            return Err(fail(format!("conditional mean violation {:.3e} in row {i}", cond - w * mass)));
        }
        // w = 0 with mass on v > 0 would make t/u undefined below; the
        // martingale property above already forces that mass to zero
        if w == 0.0 {
            let positive_v: f64 = row
                .iter()
                .zip(r.col_atoms())
                .filter(|&(_, &v)| v > 0.0)
                .map(|(p, _)| *p)
                .sum();
            if positive_v > 1e-12 {
                return Err(fail("mass on v > 0 with w = 0".into()));
            }
        }
    }
    Ok(())
}

/// The n-fold generalization of [`BreveKernels`]: one kernel per law in a
/// convex-order-increasing chain, all sharing the invariant weighted by
/// the last coordinate.
#[derive(Debug, Clone)]
pub struct BreveFamily {
    pub kernels: Vec<FiniteKernel>,
    /// `(state, atom index per coordinate)` for each kernel row.
    pub tuples: Vec<(usize, Vec<usize>)>,
    pub raw_mass: f64,
}

impl BreveFamily {
    pub fn lift(&self, f: &[f64]) -> Vec<f64> {
        self.tuples.iter().map(|&(x, _)| f[x]).collect()
    }
}

/// Builds the coupled kernel family from per-state chains of couplings
/// (`couplings[x]` couples `Q_x^(i)` to `Q_x^(i+1)`). The i-th kernel
/// moves on `(y, u_i)` and drags the remaining coordinates along the
/// Markovian-martingale conditionals; all are reversible with respect to
/// `pi(x) R_x(w_1..w_n) w_n`.
pub fn breve_family(
    chain: &MarginalChain,
    couplings: &[Vec<MartingaleCoupling>],
) -> Result<BreveFamily, ChainError> {
    let n = chain.n();
    if couplings.len() != n {
        return Err(ChainError::LengthMismatch {
            what: "coupling chains",
            got: couplings.len(),
            expected: n,
        });
    }
    let depth = couplings[0].len() + 1;
    if depth < 2 {
        return Err(ChainError::LengthMismatch {
            what: "coupling chain depth",
            got: depth,
            expected: 2,
        });
    }
    for (state, cs) in couplings.iter().enumerate() {
        if cs.len() + 1 != depth {
            return Err(ChainError::LengthMismatch {
                what: "coupling chain depth",
                got: cs.len() + 1,
                expected: depth,
            });
        }
        for c in cs {
            verify_for_breve(state, c)?;
        }
    }

    // enumerate tuples (i_1, ..., i_n) with positive joint mass and all
    // coordinates positive; the joint mass is the product of the first
    // coupling mass and the conditional masses down the chain
    let mut tuples: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    for (x, cs) in couplings.iter().enumerate() {
        let mut stack: Vec<(Vec<usize>, f64)> = Vec::new();
        let first = &cs[0];
        for (i, &w) in first.row_atoms().iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            for (j, &v) in first.col_atoms().iter().enumerate() {
                if v > 0.0 && first.mass(i, j) > 0.0 {
                    stack.push((vec![i, j], first.mass(i, j)));
                }
            }
        }
        for c in &cs[1..] {
            let mut next = Vec::with_capacity(stack.len() * 2);
            for (path, mass) in stack {
                let row = *path.last().unwrap();
                let row_mass: f64 = c.joint()[row].iter().sum();
                if row_mass <= 0.0 {
                    continue;
                }
                for (j, &v) in c.col_atoms().iter().enumerate() {
                    if v > 0.0 && c.mass(row, j) > 0.0 {
                        let mut p = path.clone();
                        p.push(j);
                        next.push((p, mass * c.mass(row, j) / row_mass));
                    }
                }
            }
            stack = next;
        }
        for (path, mass) in stack {
            tuples.push((x, path));
            masses.push(mass);
        }
    }

    let atom_of = |x: usize, coord: usize, idx: usize| -> f64 {
        if coord == 0 {
            couplings[x][0].row_atoms()[idx]
        } else {
            couplings[x][coord - 1].col_atoms()[idx]
        }
    };
    let m = tuples.len();
    let mut invariant: Vec<f64> = (0..m)
        .map(|t| {
            let (x, path) = &tuples[t];
            chain.pi[*x] * masses[t] * atom_of(*x, depth - 1, *path.last().unwrap())
        })
        .collect();
    let raw_mass: f64 = invariant.iter().sum();
    for v in &mut invariant {
        *v /= raw_mass;
    }

    let labels: Vec<String> = tuples
        .iter()
        .map(|(x, path)| {
            let coords: Vec<String> = path.iter().map(|i| i.to_string()).collect();
            format!("{}|{}", chain.states[*x], coords.join("."))
        })
        .collect();

    let mut kernels = Vec::with_capacity(depth);
    for coord in 0..depth {
        let mut matrix = vec![vec![0.0; m]; m];
        for row in 0..m {
            let (x, path) = &tuples[row];
            let w_i = atom_of(*x, coord, path[coord]);
            let mut off = 0.0;
            for col in 0..m {
                if col == row {
                    continue;
                }
                let (y, upath) = &tuples[col];
                let r = chain.ratio(*x, *y);
                let u_i = atom_of(*y, coord, upath[coord]);
                let u_n = atom_of(*y, depth - 1, *upath.last().unwrap());
                let v = chain.q[*x][*y] * masses[col] * (u_n / u_i) * (r * u_i / w_i).min(1.0);
                matrix[row][col] = v;
                off += v;
            }
            matrix[row][row] = 1.0 - off;
        }
        kernels.push(FiniteKernel::new(labels.clone(), matrix, invariant.clone())?);
    }
    Ok(BreveFamily { kernels, tuples, raw_mass })
}

/// Augments a reversible kernel with an auxiliary coordinate refreshed from
/// `nu` on accepted moves: `p(x,y) nu(y,u)` off-diagonal, the diagonal
/// remainder `r(x) = base(x,x) - offdiag(x,x)` holding `(x,u)` fixed.
/// Reversible with respect to `mu(x) nu(x,u)`.
pub fn augment_kernel(
    base: &FiniteKernel,
    offdiag: &[Vec<f64>],
    nu: &[Vec<f64>],
    aux_labels: &[String],
) -> Result<FiniteKernel, ChainError> {
    let n = base.n();
    if offdiag.len() != n || offdiag.iter().any(|r| r.len() != n) {
        return Err(ChainError::LengthMismatch { what: "offdiag", got: offdiag.len(), expected: n });
    }
    if nu.len() != n {
        return Err(ChainError::LengthMismatch { what: "nu", got: nu.len(), expected: n });
    }
    let aux = aux_labels.len();
    let mut remainder = vec![0.0; n];
    for x in 0..n {
        for y in 0..n {
            if x != y && (offdiag[x][y] - base.entry(x, y)).abs() > 1e-12 {
                return Err(ChainError::OffdiagMismatch { row: x, col: y });
            }
        }
        let r = base.entry(x, x) - offdiag[x][x];
        if !(-1e-12..=1.0 + 1e-12).contains(&r) {
            return Err(ChainError::BadDiagonalRemainder { row: x, value: r });
        }
        remainder[x] = r.clamp(0.0, 1.0);
        let nu_sum: f64 = nu[x].iter().sum();
        if nu[x].len() != aux || nu[x].iter().any(|&p| p < 0.0) || (nu_sum - 1.0).abs() > ROW_SUM_TOL
        {
            return Err(ChainError::NuRowNotStochastic { row: x, sum: nu_sum });
        }
    }

    // keep only auxiliary pairs carrying stationary mass
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for x in 0..n {
        for s in 0..aux {
            if nu[x][s] > 0.0 {
                pairs.push((x, s));
            }
        }
    }
    let m = pairs.len();
    let mut matrix = vec![vec![0.0; m]; m];
    let mut invariant = vec![0.0; m];
    for (row, &(x, s)) in pairs.iter().enumerate() {
        invariant[row] = base.invariant()[x] * nu[x][s];
        let mut off = 0.0;
        for (col, &(y, u)) in pairs.iter().enumerate() {
            if col == row {
                continue;
            }
            let v = offdiag[x][y] * nu[y][u];
            matrix[row][col] = v;
            off += v;
        }
        matrix[row][row] = 1.0 - off;
    }
    let total: f64 = invariant.iter().sum();
    for v in &mut invariant {
        *v /= total;
    }
    let labels = pairs
        .iter()
        .map(|&(x, s)| format!("{}|{}", base.labels()[x], aux_labels[s]))
        .collect();
    FiniteKernel::new(labels, matrix, invariant)
}

/// Conditional and expected acceptance rates of the pseudo-marginal kernel:
/// `alpha_xy = sum_{w,u} Q_x(w) w Q_y(u) min{1, r(x,y) u/w}` and its
/// average under `pi(x) q(x,y)`.
pub fn acceptance_rates(
    chain: &MarginalChain,
    weights: &WeightAssignment,
) -> (Vec<Vec<f64>>, f64) {
    let n = chain.n();
    let mut alpha_xy = vec![vec![0.0; n]; n];
    let mut alpha = 0.0;
    for x in 0..n {
        let qx = weights.law(x);
        for y in 0..n {
            let r = chain.ratio(x, y);
            let qy = weights.law(y);
            let mut a = 0.0;
            for (&w, &pw) in qx.atoms().iter().zip(qx.probs()) {
                if w == 0.0 {
                    continue; // carries no stationary mass
                }
                for (&u, &pu) in qy.atoms().iter().zip(qy.probs()) {
                    a += pw * w * pu * (r * u / w).min(1.0);
                }
            }
            alpha_xy[x][y] = a;
            alpha += chain.pi[x] * chain.q[x][y] * a;
        }
    }
    (alpha_xy, alpha)
}
