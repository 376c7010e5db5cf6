//! Shared dense numerics: linear solves, a symmetric Jacobi eigensolver,
//! a phase-1 simplex for linear feasibility, and the normal quantile.
//!
//! Everything here targets the small dense problems produced by finite-state
//! kernels (dimensions in the tens to low hundreds), where simplicity and
//! predictable accuracy beat asymptotic speed.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("matrix is singular to working precision (pivot {pivot:.3e})")]
    Singular { pivot: f64 },
    #[error("dimension mismatch: matrix is {rows}x{cols}, rhs has length {rhs}")]
    DimensionMismatch { rows: usize, cols: usize, rhs: usize },
    #[error("jacobi eigensolver failed to converge in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

/// Solves the dense square system `a * x = b` by LU with partial pivoting.
pub fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, NumericError> {
    let n = a.len();
    if n == 0 || a.iter().any(|row| row.len() != n) || b.len() != n {
        return Err(NumericError::DimensionMismatch {
            rows: n,
            cols: a.first().map_or(0, Vec::len),
            rhs: b.len(),
        });
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x: Vec<f64> = b.to_vec();

    for col in 0..n {
        let (piv_row, piv_val) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if piv_val < 1e-300 {
            return Err(NumericError::Singular { pivot: piv_val });
        }
        m.swap(col, piv_row);
        x.swap(col, piv_row);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            if factor != 0.0 {
                for c in col..n {
                    m[r][c] -= factor * m[col][c];
                }
                x[r] -= factor * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for c in col + 1..n {
            acc -= m[col][c] * x[c];
        }
        x[col] = acc / m[col][col];
    }
    Ok(x)
}

/// Eigenvalues and orthonormal eigenvectors of a symmetric matrix, sorted by
/// descending eigenvalue. `vectors[k]` is the eigenvector for `values[k]`.
///
/// Cyclic two-sided Jacobi; for the matrix sizes seen here (n <= ~300) it
/// converges in a handful of sweeps to near machine precision.
pub fn symmetric_eigen(a: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>), NumericError> {
    let n = a.len();
    assert!(n > 0 && a.iter().all(|row| row.len() == n), "square matrix required");
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let fro: f64 = m
        .iter()
        .flat_map(|row| row.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let tol = 1e-15 * fro.max(1e-300);

    const MAX_SWEEPS: usize = 100;
    for sweep in 0..=MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    s += 2.0 * m[p][q] * m[p][q];
                }
            }
            s.sqrt()
        };
        if off <= tol {
            break;
        }
        if sweep == MAX_SWEEPS {
            return Err(NumericError::NoConvergence { sweeps: MAX_SWEEPS });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let (mip, miq) = (m[i][p], m[i][q]);
                    m[i][p] = c * mip - s * miq;
                    m[i][q] = s * mip + c * miq;
                }
                for j in 0..n {
                    let (mpj, mqj) = (m[p][j], m[q][j]);
                    m[p][j] = c * mpj - s * mqj;
                    m[q][j] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let (vip, viq) = (v[i][p], v[i][q]);
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values: Vec<f64> = order.iter().map(|&k| m[k][k]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i][k]).collect())
        .collect();
    Ok((values, vectors))
}

/// Outcome of the phase-1 simplex on `{A x = b, x >= 0}`.
#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    /// Residual infeasibility (the minimized artificial mass).
    Infeasible(f64),
}

#[derive(Clone, Copy)]
enum PivotRule {
    /// Most-negative reduced cost, largest pivot element among ratio ties.
    DantzigStable,
    /// Lowest-index entering and tie-break: finite under degeneracy.
    Bland,
}

/// Finds a feasible point of the standard-form system `A x = b, x >= 0`
/// by minimizing the total artificial mass with a dense tableau simplex.
///
/// Near-duplicate columns (close atoms) make single pivot rules fragile,
/// so the search runs with a stabilized Dantzig rule first and falls back
/// to Bland's rule on a fresh tableau if the artificial mass fails to
/// vanish. Redundant constraints are tolerated, and the solution is
/// re-solved on its support to clear tableau roundoff.
pub fn phase1_feasible(a: &[Vec<f64>], b: &[f64], pivot_tol: f64) -> Feasibility {
    for rule in [PivotRule::DantzigStable, PivotRule::Bland] {
        // the tableau's own optimality claim is not trusted: the returned
        // point must satisfy the original system
        if let Ok(mut x) = run_phase1(a, b, pivot_tol, rule) {
            if let Some(refined) = refine_on_support(a, b, &support_of(&x)) {
                if max_residual(a, b, &refined) <= max_residual(a, b, &x) {
                    x = refined;
                }
            }
            if max_residual(a, b, &x) <= 1e-10 {
                return Feasibility::Feasible(x);
            }
        }
    }
    // floating-point pivoting can stall on near-duplicate columns; the
    // inputs are dyadic rationals, so an exact simplex settles the question
    match exact_lp::rational_phase1(a, b) {
        exact_lp::ExactOutcome::Feasible(x) => Feasibility::Feasible(x),
        exact_lp::ExactOutcome::Infeasible(residual) => Feasibility::Infeasible(residual),
    }
}

fn support_of(x: &[f64]) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(j, _)| j).collect()
}

fn run_phase1(
    a: &[Vec<f64>],
    b: &[f64],
    pivot_tol: f64,
    rule: PivotRule,
) -> Result<Vec<f64>, f64> {
    let m = a.len();
    let n = if m == 0 { 0 } else { a[0].len() };
    assert_eq!(b.len(), m, "rhs length must match constraint count");

    // tableau rows: m constraints + objective row; columns: n vars, m artificials, rhs
    let cols = n + m + 1;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for i in 0..m {
        let mut row = vec![0.0; cols];
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = flip * a[i][j];
        }
        row[n + i] = 1.0;
        row[cols - 1] = flip * b[i];
        t.push(row);
    }
    // objective: minimize sum of artificials; with the artificial basis the
    // reduced-cost row is minus the column sums of the constraint rows
    let mut obj = vec![0.0; cols];
    for j in 0..n {
        obj[j] = -(0..m).map(|i| t[i][j]).sum::<f64>();
    }
    obj[cols - 1] = -(0..m).map(|i| t[i][cols - 1]).sum::<f64>();
    t.push(obj);

    let mut basis: Vec<usize> = (n..n + m).collect();
    let max_iterations = 2000 * (m + n + 1);
    for _ in 0..max_iterations {
        let enter = match rule {
            PivotRule::DantzigStable => (0..n + m)
                .filter(|&j| t[m][j] < -pivot_tol)
                .min_by(|&x, &y| t[m][x].total_cmp(&t[m][y])),
            PivotRule::Bland => (0..n + m).find(|&j| t[m][j] < -pivot_tol),
        };
        let Some(enter) = enter else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][enter] > pivot_tol {
                let ratio = t[i][cols - 1].max(0.0) / t[i][enter];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        // a genuine tie is exact up to the last few bits
                        let window = 1e-13 * (1.0 + lr.abs());
                        let tie = (ratio - lr).abs() <= window;
                        let better = match rule {
                            PivotRule::DantzigStable => t[i][enter] > t[li][enter],
                            PivotRule::Bland => basis[i] < basis[li],
                        };
                        if ratio < lr - window || (tie && better) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        // unbounded cannot happen for a phase-1 objective; treat as failure
        let Some((leave, _)) = leave else { return Err(f64::INFINITY) };
        pivot(&mut t, leave, enter);
        basis[leave] = enter;
        // clear roundoff negatives in the rhs before the next ratio test
        for row in t.iter_mut().take(m) {
            if row[cols - 1] < 0.0 && row[cols - 1] > -1e-11 {
                row[cols - 1] = 0.0;
            }
        }
    }

    let residual = -t[m][cols - 1];
    if residual.abs() > 1e-10 {
        return Err(residual.max(0.0));
    }
    // drive out basic artificials sitting on (necessarily zero) rows
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > pivot_tol) {
                pivot(&mut t, i, j);
                basis[i] = j;
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][cols - 1].max(0.0);
        }
    }
    Ok(x)
}

fn max_residual(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(row, &bi)| {
            (row.iter().zip(x).map(|(&aij, &xj)| aij * xj).sum::<f64>() - bi).abs()
        })
        .fold(0.0f64, f64::max)
}

/// Least-squares solve of `A_S y = b` restricted to the support columns,
/// via the normal equations; `None` when they are singular.
fn refine_on_support(a: &[Vec<f64>], b: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    if k == 0 {
        return None;
    }
    let m = a.len();
    let mut ata = vec![vec![0.0; k]; k];
    let mut atb = vec![0.0; k];
    for (ii, &ci) in support.iter().enumerate() {
        for (jj, &cj) in support.iter().enumerate().skip(ii) {
            let dot: f64 = (0..m).map(|r| a[r][ci] * a[r][cj]).sum();
            ata[ii][jj] = dot;
            ata[jj][ii] = dot;
        }
        atb[ii] = (0..m).map(|r| a[r][ci] * b[r]).sum();
    }
    let y = solve_linear(&ata, &atb).ok()?;
    if y.iter().any(|&v| v < -1e-9) {
        return None;
    }
    let n = a[0].len();
    let mut x = vec![0.0; n];
    for (&col, &v) in support.iter().zip(&y) {
        x[col] = v.max(0.0);
    }
    Some(x)
}

/// Exact-arithmetic phase-1 simplex over big rationals. Every floating
/// point input is a dyadic rational, so feasibility is decided exactly;
/// Bland's rule guarantees termination. Slow, and only reached when the
/// floating-point attempts stall, which is rare.
mod exact_lp {
    use num_bigint::BigInt;
    use num_rational::Ratio;
    use num_traits::{One, Signed, ToPrimitive, Zero};

    type Rat = Ratio<BigInt>;

    pub enum ExactOutcome {
        Feasible(Vec<f64>),
        Infeasible(f64),
    }

    pub fn rational_phase1(a: &[Vec<f64>], b: &[f64]) -> ExactOutcome {
        let m = a.len();
        let n = if m == 0 { 0 } else { a[0].len() };
        let cols = n + m + 1;
        let rat = |x: f64| Rat::from_float(x).expect("finite input");

        let mut t: Vec<Vec<Rat>> = Vec::with_capacity(m + 1);
        for i in 0..m {
            let mut row = vec![Rat::zero(); cols];
            let flip = b[i] < 0.0;
            for j in 0..n {
                let v = rat(a[i][j]);
                row[j] = if flip { -v } else { v };
            }
            row[n + i] = Rat::one();
            let rhs = rat(b[i]);
            row[cols - 1] = if flip { -rhs } else { rhs };
            t.push(row);
        }
        let mut obj = vec![Rat::zero(); cols];
        for j in 0..n {
            let mut s = Rat::zero();
            for row in t.iter().take(m) {
                s += &row[j];
            }
            obj[j] = -s;
        }
        let mut s = Rat::zero();
        for row in t.iter().take(m) {
            s += &row[cols - 1];
        }
        obj[cols - 1] = -s;
        t.push(obj);

        let mut basis: Vec<usize> = (n..n + m).collect();
        loop {
            // Bland's rule, exact comparisons
            let enter = (0..n + m).find(|&j| t[m][j].is_negative());
            let Some(enter) = enter else { break };
            let mut leave: Option<(usize, Rat)> = None;
            for i in 0..m {
                if t[i][enter].is_positive() {
                    let ratio = &t[i][cols - 1] / &t[i][enter];
                    let replace = match &leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < *lr || (ratio == *lr && basis[i] < basis[*li])
                        }
                    };
                    if replace {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((leave, _)) = leave else {
                return ExactOutcome::Infeasible(f64::INFINITY);
            };
            let pv = t[leave][enter].clone();
            for c in 0..cols {
                t[leave][c] /= &pv;
            }
            for r in 0..=m {
                if r != leave && !t[r][enter].is_zero() {
                    let factor = t[r][enter].clone();
                    for c in 0..cols {
                        let delta = &factor * &t[leave][c];
                        t[r][c] -= delta;
                    }
                }
            }
            basis[leave] = enter;
        }

        let residual = (-&t[m][cols - 1]).to_f64().unwrap_or(f64::INFINITY);
        // the dyadic moment constraints never match perfectly; residual mass
        // at roundoff scale is the best any solver can do
        if residual > 1e-9 {
            return ExactOutcome::Infeasible(residual);
        }
        let mut x = vec![0.0; n];
        for i in 0..m {
            if basis[i] < n {
                x[basis[i]] = t[i][cols - 1].to_f64().unwrap_or(0.0).max(0.0);
            }
        }
        ExactOutcome::Feasible(x)
    }
}

fn pivot(t: &mut [Vec<f64>], prow: usize, pcol: usize) {
    let cols = t[prow].len();
    let pv = t[prow][pcol];
    for c in 0..cols {
        t[prow][c] /= pv;
    }
    let nrows = t.len();
    for r in 0..nrows {
        if r != prow {
            let factor = t[r][pcol];
            if factor != 0.0 {
                for c in 0..cols {
                    t[r][c] -= factor * t[prow][c];
                }
            }
        }
    }
}

/// Standard normal quantile (inverse cdf), Wichura's AS 241 (PPND16).
///
/// Absolute error is below 1e-15 over (0, 1), comfortably inside the 1e-9
/// budget assumed by the inverse-cdf samplers built on top of it.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_quantile requires p in (0,1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_545_5e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_8e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
