//! Martingale couplings realizing the convex order.
//!
//! For `Q1 <=cx Q2` there is a joint law `R` on `supp(Q1) x supp(Q2)` with
//! the two laws as marginals and `E[V | W] = W`. Existence is classical;
//! here a feasible `R` is produced by a dense phase-1 simplex on the
//! marginal + conditional-mean equality program. Any feasible point is a
//! valid coupling, and nothing downstream may depend on which one is found.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{phase1_feasible, Feasibility};
use crate::weightdist::{convex_order_leq, CxVerdict, DiscreteDistribution, WeightDistError};

/// Simplex pivot tolerance on the coupling feasibility program.
pub const PIVOT_TOL: f64 = 1e-12;
/// A coupling passes verification when every violation is below this.
pub const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("weight laws are not convex ordered ({verdict:?}); no martingale coupling exists")]
    NotConvexOrdered { verdict: CxVerdict },
    #[error("feasibility program has no solution (residual {residual:.3e}); precondition violated or tolerances too tight")]
    Infeasible { residual: f64 },
    #[error("coupling shape ({rows}x{cols}) does not match the laws ({expect_rows}x{expect_cols})")]
    ShapeMismatch { rows: usize, cols: usize, expect_rows: usize, expect_cols: usize },
    #[error("coupling atoms do not match the laws' atoms")]
    AtomMismatch,
    #[error("laws {index} and {} are not convex ordered ({verdict:?})", index + 1)]
    UnorderedPair { index: usize, verdict: CxVerdict },
    #[error(transparent)]
    Dist(#[from] WeightDistError),
}

/// Joint law of a martingale pair `(W, V)` on a finite grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoupling")]
pub struct MartingaleCoupling {
    row_atoms: Vec<f64>,
    col_atoms: Vec<f64>,
    joint: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawCoupling {
    row_atoms: Vec<f64>,
    col_atoms: Vec<f64>,
    joint: Vec<Vec<f64>>,
}

impl TryFrom<RawCoupling> for MartingaleCoupling {
    type Error = CouplingError;
    fn try_from(raw: RawCoupling) -> Result<Self, Self::Error> {
        MartingaleCoupling::from_parts(raw.row_atoms, raw.col_atoms, raw.joint)
    }
}

impl MartingaleCoupling {
    /// Assembles a coupling from raw parts, checking only the shape.
    /// Feasibility is the verifier's job.
    pub fn from_parts(
        row_atoms: Vec<f64>,
        col_atoms: Vec<f64>,
        joint: Vec<Vec<f64>>,
    ) -> Result<Self, CouplingError> {
        if joint.len() != row_atoms.len() || joint.iter().any(|r| r.len() != col_atoms.len()) {
            return Err(CouplingError::ShapeMismatch {
                rows: joint.len(),
                cols: joint.first().map_or(0, Vec::len),
                expect_rows: row_atoms.len(),
                expect_cols: col_atoms.len(),
            });
        }
        Ok(Self { row_atoms, col_atoms, joint })
    }

    pub fn row_atoms(&self) -> &[f64] {
        &self.row_atoms
    }

    pub fn col_atoms(&self) -> &[f64] {
        &self.col_atoms
    }

    pub fn joint(&self) -> &[Vec<f64>] {
        &self.joint
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.joint[i][j]
    }

    pub fn total_mass(&self) -> f64 {
        self.joint.iter().flat_map(|r| r.iter()).sum()
    }

    /// Law of `W` (row sums).
    pub fn row_marginal(&self) -> Result<DiscreteDistribution, WeightDistError> {
        let probs: Vec<f64> = self.joint.iter().map(|r| r.iter().sum()).collect();
        DiscreteDistribution::new(self.row_atoms.clone(), probs)
    }

    /// Law of `V` (column sums).
    pub fn col_marginal(&self) -> Result<DiscreteDistribution, WeightDistError> {
        let probs: Vec<f64> = (0..self.col_atoms.len())
            .map(|j| self.joint.iter().map(|r| r[j]).sum())
            .collect();
        DiscreteDistribution::new(self.col_atoms.clone(), probs)
    }

    /// Conditional law of `V` given `W = row_atoms[i]`, or `None` when the
    /// row carries no mass.
    pub fn row_conditional(&self, i: usize) -> Option<DiscreteDistribution> {
        let mass: f64 = self.joint[i].iter().sum();
        if mass <= 0.0 {
            return None;
        }
        DiscreteDistribution::new(
            self.col_atoms.clone(),
            self.joint[i].iter().map(|p| p / mass).collect(),
        )
        .ok()
    }

    /// Rescales both atom grids by `c > 0` (the convex order and feasibility
    /// are preserved under joint scaling).
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c > 0.0);
        Self {
            row_atoms: self.row_atoms.iter().map(|a| a * c).collect(),
            col_atoms: self.col_atoms.iter().map(|a| a * c).collect(),
            joint: self.joint.clone(),
        }
    }
}

/// Violations of the coupling invariants, one per invariant class.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    /// Worst row/column marginal or total-mass error.
    pub max_marginal_violation: f64,
    /// Worst conditional-mean (martingale) error over rows.
    pub max_martingale_violation: f64,
    /// Most negative joint entry (0 when all entries are nonnegative).
    pub max_negativity: f64,
    pub passes: bool,
}

/// Builds a feasible martingale coupling of `q1 <=cx q2`.
pub fn build_martingale_coupling(
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
) -> Result<MartingaleCoupling, CouplingError> {
    let verdict = convex_order_leq(q1, q2);
    if verdict != CxVerdict::Holds {
        return Err(CouplingError::NotConvexOrdered { verdict });
    }
    let n1 = q1.len();
    let n2 = q2.len();
    let nvars = n1 * n2;
    let var = |i: usize, j: usize| i * n2 + j;

    // equality constraints: row marginals, column marginals, and the
    // zero-rhs form of the conditional-mean constraint
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(2 * n1 + n2);
    let mut b: Vec<f64> = Vec::with_capacity(2 * n1 + n2);
    for i in 0..n1 {
        let mut row = vec![0.0; nvars];
        for j in 0..n2 {
            row[var(i, j)] = 1.0;
        }
        a.push(row);
        b.push(q1.probs()[i]);
    }
    for j in 0..n2 {
        let mut row = vec![0.0; nvars];
        for i in 0..n1 {
            row[var(i, j)] = 1.0;
        }
        a.push(row);
        b.push(q2.probs()[j]);
    }
    for i in 0..n1 {
        let w = q1.atoms()[i];
        let mut row = vec![0.0; nvars];
        for j in 0..n2 {
            row[var(i, j)] = q2.atoms()[j] - w;
        }
        a.push(row);
        b.push(0.0);
    }

    let x = match phase1_feasible(&a, &b, PIVOT_TOL) {
        Feasibility::Feasible(x) => x,
        Feasibility::Infeasible(residual) => return Err(CouplingError::Infeasible { residual }),
    };
    let joint: Vec<Vec<f64>> =
        (0..n1).map(|i| (0..n2).map(|j| x[var(i, j)].max(0.0)).collect()).collect();
    let coupling =
        MartingaleCoupling::from_parts(q1.atoms().to_vec(), q2.atoms().to_vec(), joint)?;
    let report = verify_martingale_coupling(&coupling, q1, q2)?;
    if !report.passes {
        return Err(CouplingError::Infeasible {
            residual: report.max_marginal_violation.max(report.max_martingale_violation),
        });
    }
    Ok(coupling)
}

/// Measures how far `r` is from being a martingale coupling of `(q1, q2)`.
pub fn verify_martingale_coupling(
    r: &MartingaleCoupling,
    q1: &DiscreteDistribution,
    q2: &DiscreteDistribution,
) -> Result<CouplingReport, CouplingError> {
    if r.row_atoms.len() != q1.len() || r.col_atoms.len() != q2.len() {
        return Err(CouplingError::ShapeMismatch {
            rows: r.row_atoms.len(),
            cols: r.col_atoms.len(),
            expect_rows: q1.len(),
            expect_cols: q2.len(),
        });
    }
    let atoms_match = r
        .row_atoms
        .iter()
        .zip(q1.atoms())
        .chain(r.col_atoms.iter().zip(q2.atoms()))
        .all(|(a, b)| (a - b).abs() <= 1e-9);
    if !atoms_match {
        return Err(CouplingError::AtomMismatch);
    }

    let mut marginal: f64 = (r.total_mass() - 1.0).abs();
    for (i, &p) in q1.probs().iter().enumerate() {
        let row_sum: f64 = r.joint[i].iter().sum();
        marginal = marginal.max((row_sum - p).abs());
    }
    for (j, &p) in q2.probs().iter().enumerate() {
        let col_sum: f64 = r.joint.iter().map(|row| row[j]).sum();
        marginal = marginal.max((col_sum - p).abs());
    }

    let mut martingale: f64 = 0.0;
    for (i, &w) in r.row_atoms.iter().enumerate() {
        let row_sum: f64 = r.joint[i].iter().sum();
        let cond_sum: f64 = r.joint[i].iter().zip(&r.col_atoms).map(|(p, v)| p * v).sum();
        martingale = martingale.max((cond_sum - w * row_sum).abs());
    }

    let max_negativity = r
        .joint
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, &p| acc.max(-p));
    let passes =
        marginal < VERIFY_TOL && martingale < VERIFY_TOL && max_negativity < VERIFY_TOL;
    Ok(CouplingReport {
        max_marginal_violation: marginal,
        max_martingale_violation: martingale,
        max_negativity,
        passes,
    })
}

/// Pairwise couplings `R^(2), ..., R^(n)` of an increasing chain
/// `Q_1 <=cx ... <=cx Q_n`; their composition is the joint law of a
/// Markovian martingale with the given marginals.
pub fn chain_couplings(
    qs: &[DiscreteDistribution],
) -> Result<Vec<MartingaleCoupling>, CouplingError> {
    assert!(qs.len() >= 2, "need at least two laws to chain");
    for (index, pair) in qs.windows(2).enumerate() {
        let verdict = convex_order_leq(&pair[0], &pair[1]);
        if verdict != CxVerdict::Holds {
            return Err(CouplingError::UnorderedPair { index, verdict });
        }
    }
    let mut out = Vec::with_capacity(qs.len() - 1);
    for pair in qs.windows(2) {
        out.push(build_martingale_coupling(&pair[0], &pair[1])?);
    }
    // push marginals through the chain of conditionals; each must reproduce
    // the corresponding input law
    let mut current = qs[0].clone();
    for (idx, coupling) in out.iter().enumerate() {
        current = pushforward(&current, coupling)?;
        let target = &qs[idx + 1];
        let max_err = current
            .probs()
            .iter()
            .zip(target.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if current.len() != target.len() || max_err > VERIFY_TOL {
            return Err(CouplingError::Infeasible { residual: max_err });
        }
    }
    Ok(out)
}

/// Pushes a law on the coupling's row grid through its conditionals,
/// producing a law on the column grid.
pub fn pushforward(
    dist: &DiscreteDistribution,
    coupling: &MartingaleCoupling,
) -> Result<DiscreteDistribution, CouplingError> {
    if dist.len() != coupling.row_atoms.len() {
        return Err(CouplingError::ShapeMismatch {
            rows: dist.len(),
            cols: dist.len(),
            expect_rows: coupling.row_atoms.len(),
            expect_cols: coupling.row_atoms.len(),
        });
    }
    let n2 = coupling.col_atoms.len();
    let mut probs = vec![0.0; n2];
    for (i, &p) in dist.probs().iter().enumerate() {
        let row_mass: f64 = coupling.joint[i].iter().sum();
        if row_mass <= 0.0 {
            continue;
        }
        for j in 0..n2 {
            probs[j] += p * coupling.joint[i][j] / row_mass;
        }
    }
    Ok(DiscreteDistribution::new(coupling.col_atoms.clone(), probs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use rand::SeedableRng;

    fn law(atoms: &[f64], probs: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(atoms.to_vec(), probs.to_vec()).unwrap()
    }

    #[test]
    fn delta_to_any_law_is_outer_product() {
        let q2 = law(&[0.5, 2.0], &[2.0 / 3.0, 1.0 / 3.0]);
        let r = build_martingale_coupling(&DiscreteDistribution::delta(1.0), &q2).unwrap();
        assert!((r.mass(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.mass(0, 1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_laws_accept_diagonal_coupling() {
        let q = law(&[0.5, 1.0, 2.0], &[0.4, 0.35, 0.25]);
        let mut joint = vec![vec![0.0; 3]; 3];
        for i in 0..3 {
            joint[i][i] = q.probs()[i];
        }
        let diag =
            MartingaleCoupling::from_parts(q.atoms().to_vec(), q.atoms().to_vec(), joint).unwrap();
        assert!(verify_martingale_coupling(&diag, &q, &q).unwrap().passes);
        // the solver's own output must verify too
        let built = build_martingale_coupling(&q, &q).unwrap();
        assert!(verify_martingale_coupling(&built, &q, &q).unwrap().passes);
    }

    #[test]
    fn two_by_two_unique_solution() {
        let q1 = law(&[0.5, 2.0], &[2.0 / 3.0, 1.0 / 3.0]);
        let q2 = law(&[0.0, 3.0], &[2.0 / 3.0, 1.0 / 3.0]);
        let r = build_martingale_coupling(&q1, &q2).unwrap();
        let expect = [[5.0 / 9.0, 1.0 / 9.0], [1.0 / 9.0, 2.0 / 9.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (r.mass(i, j) - expect[i][j]).abs() < 1e-10,
                    "entry ({i},{j}) = {} != {}",
                    r.mass(i, j),
                    expect[i][j]
                );
            }
        }
    }

    #[test]
    fn wrong_marginals_and_shifted_mass_fail() {
        let q1 = law(&[0.5, 1.5], &[0.5, 0.5]);
        let q2 = law(&[0.5, 1.5], &[0.25, 0.75]);
        let mut joint = vec![vec![0.0; 2]; 2];
        joint[0][0] = 0.5;
        joint[1][1] = 0.5;
        let diag = MartingaleCoupling::from_parts(
            q1.atoms().to_vec(),
            q2.atoms().to_vec(),
            joint,
        )
        .unwrap();
        let report = verify_martingale_coupling(&diag, &q1, &q2).unwrap();
        assert!(!report.passes);
        assert!(report.max_marginal_violation > 0.1);

        // shifting one row's mass to the top atom breaks the conditional mean
        let q = law(&[0.5, 1.0, 2.0], &[0.4, 0.35, 0.25]);
        let good = build_martingale_coupling(&q, &q).unwrap();
        let mut bad_joint = good.joint().to_vec();
        let row_mass: f64 = bad_joint[0].iter().sum();
        bad_joint[0] = vec![0.0, 0.0, row_mass];
        let bad =
            MartingaleCoupling::from_parts(q.atoms().to_vec(), q.atoms().to_vec(), bad_joint)
                .unwrap();
        let report = verify_martingale_coupling(&bad, &q, &q).unwrap();
        assert!(!report.passes);
        assert!(report.max_martingale_violation > 0.1);
    }

    #[test]
    fn unordered_pair_is_rejected() {
        let q1 = law(&[0.0, 2.0], &[0.5, 0.5]);
        let q2 = DiscreteDistribution::delta(1.0);
        assert!(matches!(
            build_martingale_coupling(&q1, &q2),
            Err(CouplingError::NotConvexOrdered { .. })
        ));
    }

    #[test]
    fn random_spread_pairs_couple_and_verify() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(41);
        for _ in 0..200 {
            let q1 = gen::random_unit_mean_law(&mut rng, 4, 0.0);
            let q2 = gen::mean_preserving_spread_chain(&mut rng, &q1, 2);
            let r = build_martingale_coupling(&q1, &q2).unwrap();
            let report = verify_martingale_coupling(&r, &q1, &q2).unwrap();
            assert!(report.passes, "violations: {report:?}");

            // column marginal sits above the row marginal in the convex order
            let w = r.row_marginal().unwrap();
            let v = r.col_marginal().unwrap();
            assert_eq!(convex_order_leq(&w, &v), CxVerdict::Holds);

            // row conditionals have mean w
            for (i, &wi) in r.row_atoms().iter().enumerate() {
                if let Some(cond) = r.row_conditional(i) {
                    assert!((cond.mean() - wi).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn feasibility_survives_joint_rescaling() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(42);
        for _ in 0..20 {
            let q1 = gen::random_unit_mean_law(&mut rng, 3, 0.1);
            let q2 = gen::mean_preserving_spread_chain(&mut rng, &q1, 2);
            let c = rand::RngExt::random_range(&mut rng, 0.1..5.0);
            let r = build_martingale_coupling(&q1.scale(c), &q2.scale(c)).unwrap();
            let report =
                verify_martingale_coupling(&r, &q1.scale(c), &q2.scale(c)).unwrap();
            assert!(report.passes);
        }
    }

    #[test]
    fn chained_couplings_push_marginals_through() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(43);
        let q1 = gen::random_unit_mean_law(&mut rng, 3, 0.2);
        let q2 = gen::mean_preserving_spread_chain(&mut rng, &q1, 1);
        let q3 = gen::mean_preserving_spread_chain(&mut rng, &q2, 1);
        let q4 = gen::mean_preserving_spread_chain(&mut rng, &q3, 1);
        let qs = vec![q1.clone(), q2, q3, q4.clone()];
        let couplings = chain_couplings(&qs).unwrap();
        assert_eq!(couplings.len(), 3);

        let mut current = q1;
        for c in &couplings {
            current = pushforward(&current, c).unwrap();
        }
        for (p, q) in current.probs().iter().zip(q4.probs()) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn chain_base_case_and_diagonal_tail() {
        let q = law(&[0.5, 1.5], &[0.5, 0.5]);
        let qs = vec![DiscreteDistribution::delta(1.0), q.clone(), q.clone()];
        let couplings = chain_couplings(&qs).unwrap();
        // identical last two laws admit (and the solver finds) a coupling
        // that verifies; its conditionals must be mean-preserving
        let report = verify_martingale_coupling(&couplings[1], &q, &q).unwrap();
        assert!(report.passes);

        let pair = chain_couplings(&qs[..2]).unwrap();
        let direct = build_martingale_coupling(&qs[0], &qs[1]).unwrap();
        assert_eq!(pair[0], direct);

        let bad = vec![q.clone(), DiscreteDistribution::delta(1.0)];
        assert!(matches!(
            chain_couplings(&bad),
            Err(CouplingError::UnorderedPair { index: 0, .. })
        ));
    }

    #[test]
    fn degenerate_programs_admit_several_feasible_points() {
        // with equal laws the feasible set is a polytope: the solver's
        // point, the diagonal, and any mixture must all verify, since
        // nothing downstream may depend on which point was found
        let q = law(&[0.5, 1.0, 2.0], &[0.4, 0.35, 0.25]);
        let solved = build_martingale_coupling(&q, &q).unwrap();
        let k = q.len();
        let mut diag_joint = vec![vec![0.0; k]; k];
        for i in 0..k {
            diag_joint[i][i] = q.probs()[i];
        }
        let diagonal =
            MartingaleCoupling::from_parts(q.atoms().to_vec(), q.atoms().to_vec(), diag_joint)
                .unwrap();
        for beta in [0.0, 0.25, 0.5, 1.0] {
            let joint: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| beta * solved.mass(i, j) + (1.0 - beta) * diagonal.mass(i, j))
                        .collect()
                })
                .collect();
            let mix =
                MartingaleCoupling::from_parts(q.atoms().to_vec(), q.atoms().to_vec(), joint)
                    .unwrap();
            assert!(verify_martingale_coupling(&mix, &q, &q).unwrap().passes);
        }
    }

    #[test]
    fn serde_round_trip_checks_shape() {
        let q = law(&[0.5, 1.5], &[0.5, 0.5]);
        let r = build_martingale_coupling(&q, &q).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: MartingaleCoupling = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let bad = r#"{"row_atoms":[1.0],"col_atoms":[1.0,2.0],"joint":[[1.0]]}"#;
        assert!(serde_json::from_str::<MartingaleCoupling>(bad).is_err());
    }
}
