//! ABC-MCMC estimator laws: plain versus stratified indicator estimators
//! with their exact finite laws, the g-and-k inverse cdf used to drive
//! them, and an end-to-end grid comparison of the two pseudo-marginal
//! kernels they induce.

use rand_pcg::Pcg64;
use serde::Serialize;
use thiserror::Error;

use rand::RngExt;

use crate::chains::{
    acceptance_rates, pseudo_marginal_kernel, ChainError, MarginalChain, WeightAssignment,
};
use crate::numeric::normal_quantile;
use crate::samplers::{ChainTrace, RngSpec};
use crate::spectral::{asymptotic_variance, spectral_gaps, SpectralError};
use crate::weightdist::{DiscreteDistribution, WeightDistError};

#[derive(Debug, Error)]
pub enum AbcError {
    #[error("scale must be positive, got {scale}")]
    BadScale { scale: f64 },
    #[error("kurtosis parameter must exceed -0.5, got {kurt}")]
    BadKurtosis { kurt: f64 },
    #[error("quantile map is not monotone near u = {u}")]
    NotMonotone { u: f64 },
    #[error("u = {u} outside (0,1)")]
    UOutOfRange { u: f64 },
    #[error("epsilon must be positive, got {eps}")]
    BadEpsilon { eps: f64 },
    #[error("region ({lo}, {hi}) is not a subinterval of [0,1]")]
    BadRegion { lo: f64, hi: f64 },
    #[error("strata count {strata} does not match the estimator size {n}")]
    StrataMismatch { strata: usize, n: usize },
    #[error("stratum probability q[{index}] = {value} outside [0,1]; region and strata disagree")]
    QOutOfRange { index: usize, value: f64 },
    #[error("grid and chain sizes differ: {grid} vs {chain}")]
    GridMismatch { grid: usize, chain: usize },
    #[error("every grid state has zero acceptance probability")]
    EmptyGrid,
    #[error(transparent)]
    Dist(#[from] WeightDistError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Parameters of the g-and-k quantile distribution. `c` is conventionally
/// 0.8; `g` controls skewness and `k > -0.5` kurtosis.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GandKParams {
    pub loc: f64,
    pub scale: f64,
    pub c: f64,
    pub g: f64,
    pub k: f64,
}

impl GandKParams {
    /// Validates the parameters and checks monotonicity of the quantile
    /// map numerically on a grid of step 1e-4.
    pub fn new(loc: f64, scale: f64, c: f64, g: f64, k: f64) -> Result<Self, AbcError> {
        if scale <= 0.0 {
            return Err(AbcError::BadScale { scale });
        }
        if k <= -0.5 {
            return Err(AbcError::BadKurtosis { kurt: k });
        }
        let p = Self { loc, scale, c, g, k };
        let step = 1e-4;
        let mut last = f64::NEG_INFINITY;
        let mut u = step;
        while u < 1.0 - 0.5 * step {
            let v = p.inverse_cdf_unchecked(u);
            if v < last {
                return Err(AbcError::NotMonotone { u });
            }
            last = v;
            u += step;
        }
        Ok(p)
    }

    fn inverse_cdf_unchecked(&self, u: f64) -> f64 {
        let z = normal_quantile(u);
        // (1 - exp(-gz)) / (1 + exp(-gz)) = tanh(gz / 2), overflow-safe
        let skew = 1.0 + self.c * (0.5 * self.g * z).tanh();
        self.loc + self.scale * skew * (1.0 + z * z).powf(self.k) * z
    }
}

/// Evaluates the g-and-k quantile function at `u` in `(0,1)`.
pub fn gk_inverse_cdf(u: f64, p: &GandKParams) -> Result<f64, AbcError> {
    if !(0.0 < u && u < 1.0) {
        return Err(AbcError::UOutOfRange { u });
    }
    Ok(p.inverse_cdf_unchecked(u))
}

/// Solves `F^{-1}(u) = target` by bisection (u-resolution 1e-12, clipped
/// to [0,1]).
fn solve_u(p: &GandKParams, target: f64) -> f64 {
    let (mut lo, mut hi) = (1e-15, 1.0 - 1e-15);
    if p.inverse_cdf_unchecked(lo) >= target {
        return 0.0;
    }
    if p.inverse_cdf_unchecked(hi) <= target {
        return 1.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if p.inverse_cdf_unchecked(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The u-interval mapped into the acceptance band `|y - ystar| <= eps`
/// by the (monotone) quantile map. May be empty (`u_lo == u_hi`).
pub fn acceptance_region(
    p: &GandKParams,
    ystar: f64,
    eps: f64,
) -> Result<(f64, f64), AbcError> {
    if eps <= 0.0 {
        return Err(AbcError::BadEpsilon { eps });
    }
    let lo = solve_u(p, ystar - eps);
    let hi = solve_u(p, ystar + eps);
    Ok((lo, hi.max(lo)))
}

/// Equal-measure partition of `[0,1]` into `n` intervals.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StrataSpec {
    n: usize,
}

impl StrataSpec {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        Self { n }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// The `i`-th stratum `[i/n, (i+1)/n)`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        (i as f64 / self.n as f64, (i + 1) as f64 / self.n as f64)
    }
}

/// The exact laws of the plain and stratified indicator estimators.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorLaws {
    /// `Binomial(N, p_bar) / N`.
    pub plain: DiscreteDistribution,
    /// `PoissonBinomial(q_1..q_N) / N`.
    pub stratified: DiscreteDistribution,
    /// Acceptance probability of a uniform draw; the ABC likelihood.
    pub p_bar: f64,
    /// Per-stratum acceptance probabilities.
    pub strata_probs: Vec<f64>,
}

/// Law of the count of successes among independent Bernoulli trials with
/// the given probabilities, by the exact convolution recurrence.
pub fn poisson_binomial_probs(qs: &[f64]) -> Vec<f64> {
    let mut dp = vec![0.0; qs.len() + 1];
    dp[0] = 1.0;
    for (trial, &q) in qs.iter().enumerate() {
        for k in (0..=trial + 1).rev() {
            let from_success = if k > 0 { dp[k - 1] * q } else { 0.0 };
            dp[k] = dp[k] * (1.0 - q) + from_success;
        }
    }
    dp
}

/// Exact laws of `T = (1/N) sum I{U_i in region}` under iid uniforms
/// (plain) and one uniform per stratum (stratified).
pub fn estimator_laws(
    n: usize,
    region: (f64, f64),
    strata: &StrataSpec,
) -> Result<EstimatorLaws, AbcError> {
    if strata.count() != n {
        return Err(AbcError::StrataMismatch { strata: strata.count(), n });
    }
    let (lo, hi) = region;
    if !(0.0..=1.0 + 1e-12).contains(&lo) || !(0.0..=1.0 + 1e-12).contains(&hi) || lo > hi {
        return Err(AbcError::BadRegion { lo, hi });
    }
    let p_bar = hi - lo;
    let mut qs = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = strata.interval(i);
        let overlap = (b.min(hi) - a.max(lo)).max(0.0);
        let q = overlap * n as f64;
        if !(-1e-9..=1.0 + 1e-9).contains(&q) {
            return Err(AbcError::QOutOfRange { index: i, value: q });
        }
        qs.push(q.clamp(0.0, 1.0));
    }
    let atoms: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let plain = DiscreteDistribution::new(
        atoms.clone(),
        poisson_binomial_probs(&vec![p_bar; n]),
    )?;
    let stratified = DiscreteDistribution::new(atoms, poisson_binomial_probs(&qs))?;
    Ok(EstimatorLaws { plain, stratified, p_bar, strata_probs: qs })
}

/// Per-state quantities of the grid comparison.
#[derive(Debug, Clone, Serialize)]
pub struct AbcStateRow {
    pub state: String,
    pub p_bar: f64,
    pub strata_probs: Vec<f64>,
}

/// Exact and empirical comparison of the plain and stratified ABC
/// pseudo-marginal kernels over a parameter grid.
#[derive(Debug, Clone, Serialize)]
pub struct AbcComparisonReport {
    pub rows: Vec<AbcStateRow>,
    pub excluded: Vec<String>,
    pub alpha_plain: f64,
    pub alpha_strat: f64,
    pub var_plain: f64,
    pub var_strat: f64,
    pub gap_plain: f64,
    pub gap_strat: f64,
    /// Largest rejection probability of the plain kernel over its support
    /// (enters the finite-space spectral-gap comparison).
    pub rho_star_plain: f64,
    pub empirical_alpha_plain: f64,
    pub empirical_alpha_strat: f64,
}

/// Builds both estimator-law assignments over the grid, constructs the two
/// exact pseudo-marginal kernels, and reports acceptance, variance and gap
/// comparisons plus an empirical confirmation run.
///
/// States with zero ABC likelihood are dropped from the grid (reported in
/// `excluded`) and the prior chain is restricted and renormalized.
#[allow(clippy::too_many_arguments)]
pub fn run_abc_comparison(
    params: &[GandKParams],
    prior: &MarginalChain,
    ystar: f64,
    eps: f64,
    n_estimator: usize,
    sim_steps: usize,
    spec: RngSpec,
) -> Result<AbcComparisonReport, AbcError> {
    if params.len() != prior.n() {
        return Err(AbcError::GridMismatch { grid: params.len(), chain: prior.n() });
    }
    let strata = StrataSpec::new(n_estimator);
    let mut keep: Vec<usize> = Vec::new();
    let mut excluded: Vec<String> = Vec::new();
    let mut laws: Vec<EstimatorLaws> = Vec::new();
    for (i, p) in params.iter().enumerate() {
        let region = acceptance_region(p, ystar, eps)?;
        let l = estimator_laws(n_estimator, region, &strata)?;
        if l.p_bar > 0.0 {
            keep.push(i);
            laws.push(l);
        } else {
            excluded.push(prior.states()[i].clone());
        }
    }
    if keep.is_empty() {
        return Err(AbcError::EmptyGrid);
    }

    // restrict the prior chain to the surviving grid
    let states: Vec<String> = keep.iter().map(|&i| prior.states()[i].clone()).collect();
    let pi_raw: Vec<f64> = keep.iter().map(|&i| prior.pi()[i]).collect();
    let pi_total: f64 = pi_raw.iter().sum();
    let pi: Vec<f64> = pi_raw.iter().map(|p| p / pi_total).collect();
    let q: Vec<Vec<f64>> = keep
        .iter()
        .map(|&x| {
            let row: Vec<f64> = keep.iter().map(|&y| prior.q()[x][y]).collect();
            let total: f64 = row.iter().sum();
            row.iter().map(|v| v / total).collect()
        })
        .collect();
    let chain = MarginalChain::new(states, pi, q)?;

    let normalize = |law: &DiscreteDistribution, p_bar: f64| -> Result<DiscreteDistribution, AbcError> {
        Ok(DiscreteDistribution::new(
            law.atoms().iter().map(|a| a / p_bar).collect(),
            law.probs().to_vec(),
        )?)
    };
    let mut plain_laws = Vec::with_capacity(keep.len());
    let mut strat_laws = Vec::with_capacity(keep.len());
    let mut rows = Vec::with_capacity(keep.len());
    for (slot, &i) in keep.iter().enumerate() {
        let l = &laws[slot];
        plain_laws.push(normalize(&l.plain, l.p_bar)?);
        strat_laws.push(normalize(&l.stratified, l.p_bar)?);
        rows.push(AbcStateRow {
            state: prior.states()[i].clone(),
            p_bar: l.p_bar,
            strata_probs: l.strata_probs.clone(),
        });
    }
    let plain_assign = WeightAssignment::new(plain_laws.clone())?;
    let strat_assign = WeightAssignment::new(strat_laws.clone())?;

    let f: Vec<f64> = keep.iter().map(|&i| params[i].loc).collect();
    let pm_plain = pseudo_marginal_kernel(&chain, &plain_assign)?;
    let pm_strat = pseudo_marginal_kernel(&chain, &strat_assign)?;
    let (_, alpha_plain) = acceptance_rates(&chain, &plain_assign);
    let (_, alpha_strat) = acceptance_rates(&chain, &strat_assign);
    let var_plain = asymptotic_variance(&pm_plain.kernel, &pm_plain.lift(&f), 1.0)?;
    let var_strat = asymptotic_variance(&pm_strat.kernel, &pm_strat.lift(&f), 1.0)?;
    let gap_plain = spectral_gaps(&pm_plain.kernel)?.right_gap;
    let gap_strat = spectral_gaps(&pm_strat.kernel)?.right_gap;

    let to_samplers = |laws: &[DiscreteDistribution]| -> Result<Vec<crate::samplers::WeightSampler>, AbcError> {
        laws.iter()
            .map(|l| crate::samplers::WeightSampler::discrete(l.clone()).map_err(|_| AbcError::EmptyGrid))
            .collect()
    };
    let plain_trace =
        crate::samplers::run_pseudo_marginal(&chain, &to_samplers(&plain_laws)?, sim_steps, spec, 0);
    let strat_trace =
        crate::samplers::run_pseudo_marginal(&chain, &to_samplers(&strat_laws)?, sim_steps, spec, 0);

    Ok(AbcComparisonReport {
        rows,
        excluded,
        alpha_plain,
        alpha_strat,
        var_plain,
        var_strat,
        gap_plain,
        gap_strat,
        rho_star_plain: pm_plain.max_rejection(),
        empirical_alpha_plain: plain_trace.acceptance_rate(),
        empirical_alpha_strat: strat_trace.acceptance_rate(),
    })
}

/// One stratified draw of the indicator vector: `V_i` uniform on the
/// `i`-th stratum, indicator of landing in the region.
pub fn stratified_indicators(
    rng: &mut Pcg64,
    region: (f64, f64),
    strata: &StrataSpec,
) -> Vec<bool> {
    let n = strata.count();
    (0..n)
        .map(|i| {
            let (a, b) = strata.interval(i);
            let v = a + (b - a) * rng.random::<f64>();
            region.0 <= v && v <= region.1
        })
        .collect()
}

/// Outcome of a stratified ABC pseudo-marginal simulation.
#[derive(Debug, Clone)]
pub struct AbcRunResult {
    pub trace: ChainTrace,
    /// Number of indicator evaluations actually performed.
    pub indicator_evals: u64,
}

/// Simulates the stratified ABC pseudo-marginal chain over the grid.
///
/// With `early_rejection` the indicators of a proposal are evaluated
/// progressively; evaluation stops as soon as the accept/reject decision
/// is forced, using the monotone structure of the region (after observing
/// a 1 followed by a 0 every later indicator is 0). The decision sequence
/// is identical to the full evaluation; only `indicator_evals` shrinks.
pub fn run_abc_pseudo_marginal(
    chain: &MarginalChain,
    regions: &[(f64, f64)],
    n_estimator: usize,
    steps: usize,
    spec: RngSpec,
    init: usize,
    early_rejection: bool,
) -> AbcRunResult {
    assert_eq!(regions.len(), chain.n());
    let strata = StrataSpec::new(n_estimator);
    let mut rng = spec.rng();
    let mut evals: u64 = 0;

    // initial weight: full evaluation at the initial state
    let draw_vs = |rng: &mut Pcg64| -> Vec<f64> {
        (0..n_estimator)
            .map(|i| {
                let (a, b) = strata.interval(i);
                a + (b - a) * rng.random::<f64>()
            })
            .collect()
    };
    let weight_of = |count: usize, p_bar: f64| count as f64 / (n_estimator as f64 * p_bar);

    let mut x = init;
    let vs = draw_vs(&mut rng);
    let p_bar_x = regions[x].1 - regions[x].0;
    let full_count = |vs: &[f64], region: (f64, f64)| -> usize {
        vs.iter().filter(|&&v| region.0 <= v && v <= region.1).count()
    };
    evals += n_estimator as u64;
    let mut w = weight_of(full_count(&vs, regions[x]), p_bar_x);
    let init_weight = w;

    let mut states = Vec::with_capacity(steps);
    let mut weights = Vec::with_capacity(steps);
    let mut accepted = Vec::with_capacity(steps);
    for _ in 0..steps {
        let y = draw_categorical_pcg(&mut rng, &chain.q()[x]);
        let vs = draw_vs(&mut rng);
        let coin: f64 = rng.random();
        let region = regions[y];
        let p_bar_y = region.1 - region.0;
        let threshold = coin * w * n_estimator as f64 * p_bar_y / chain.ratio(x, y).max(1e-300);

        let take;
        if !early_rejection {
            evals += n_estimator as u64;
            let t = full_count(&vs, region);
            take = (t as f64) > threshold;
            if take {
                x = y;
                w = weight_of(t, p_bar_y);
            }
        } else {
            // progressive evaluation with monotone deduction
            let mut sum = 0usize;
            let mut seen_one = false;
            let mut closed = false; // a 1 followed by a 0: tail is all zeros
            let mut rejected_early = false;
            for (i, &v) in vs.iter().enumerate() {
                let remaining = n_estimator - 1 - i;
                evals += 1;
                let ind = region.0 <= v && v <= region.1;
                if ind {
                    sum += 1;
                    seen_one = true;
                } else if seen_one {
                    closed = true;
                }
                let max_possible = if closed { sum } else { sum + remaining };
                if (max_possible as f64) <= threshold {
                    rejected_early = true;
                    break;
                }
                if closed {
                    // the remaining indicators are deduced zeros: sum is final
                    break;
                }
            }
            if rejected_early {
                take = false;
            } else {
                // sum is the exact count: the loop either saw every
                // indicator or deduced the zero tail
                take = (sum as f64) > threshold;
                if take {
                    x = y;
                    w = weight_of(sum, p_bar_y);
                }
            }
        }
        states.push(x);
        weights.push(w);
        accepted.push(take);
    }
    AbcRunResult {
        trace: ChainTrace { init_state: init, init_weight, states, weights, accepted },
        indicator_evals: evals,
    }
}

fn draw_categorical_pcg(rng: &mut Pcg64, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
