//! Monte Carlo execution of the pseudo-marginal and refreshed-ratio
//! algorithms, for weight laws that are awkward to enumerate exactly
//! (the lognormal penalty method in particular), plus the batch-means
//! estimator of the asymptotic variance.
//!
//! Determinism contract: a run is a pure function of `(RngSpec, inputs)`.
//! Each step consumes draws in the fixed order (proposal, weight,
//! acceptance uniform), and a single-atom discrete sampler consumes no
//! draws at all, so noiseless runs replay the marginal algorithm's stream
//! exactly.

use rand::RngExt;
use rand_pcg::Pcg64;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

use crate::chains::MarginalChain;
use crate::numeric::normal_quantile;
use crate::weightdist::{DiscreteDistribution, WeightDistError};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("need {expected} samplers, got {got}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("batch means needs at least {needed} values per batch, got {len} over {batches} batches")]
    TooFewValues { len: usize, batches: usize, needed: usize },
    #[error(transparent)]
    Dist(#[from] WeightDistError),
}

/// Seed and stream selector for a reproducible generator. Identical specs
/// replay identical draw sequences; distinct streams are independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> Pcg64 {
        Pcg64::new(self.seed as u128, self.stream as u128)
    }
}

/// A unit-mean weight sampler.
#[derive(Debug, Clone)]
pub enum WeightSampler {
    /// Finite law; must have unit mean.
    Discrete(DiscreteDistribution),
    /// `exp(N(-sigma^2/2, sigma^2))`, the penalty-method noise. The
    /// location `-sigma^2/2` both fixes the mean at one and makes a common
    /// lognormal family satisfy the refreshed-ratio reversibility
    /// condition.
    Lognormal { sigma: f64 },
}

impl WeightSampler {
    pub fn discrete(law: DiscreteDistribution) -> Result<Self, SamplerError> {
        law.require_unit_mean()?;
        Ok(Self::Discrete(law))
    }

    pub fn lognormal(sigma: f64) -> Self {
        assert!(sigma > 0.0);
        Self::Lognormal { sigma }
    }

    /// The noiseless sampler; consumes no randomness.
    pub fn noiseless() -> Self {
        Self::Discrete(DiscreteDistribution::delta(1.0))
    }

    /// Draws one weight. Consumes exactly one uniform, except for
    /// single-atom discrete laws which consume none.
    pub fn sample(&self, rng: &mut Pcg64) -> f64 {
        match self {
            Self::Discrete(law) => {
                if law.len() == 1 {
                    return law.atoms()[0];
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (&a, &p) in law.atoms().iter().zip(law.probs()) {
                    acc += p;
                    if u < acc {
                        return a;
                    }
                }
                law.max_atom()
            }
            Self::Lognormal { sigma } => {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                (sigma * normal_quantile(u) - 0.5 * sigma * sigma).exp()
            }
        }
    }
}

/// Realized path of a pseudo-marginal or refreshed-ratio run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub init_state: usize,
    pub init_weight: f64,
    /// `X_n` for `n = 1..=M`.
    pub states: Vec<usize>,
    /// The weight carried after step `n` (pseudo-marginal) or the weight
    /// drawn at step `n` (refreshed-ratio).
    pub weights: Vec<f64>,
    pub accepted: Vec<bool>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    /// Fraction of steps spent in each of `n` states.
    pub fn occupation(&self, n: usize) -> Vec<f64> {
        let mut counts = vec![0usize; n];
        for &s in &self.states {
            counts[s] += 1;
        }
        counts.into_iter().map(|c| c as f64 / self.states.len() as f64).collect()
    }

    /// Applies a function on states along the path.
    pub fn f_values(&self, f: &[f64]) -> Vec<f64> {
        self.states.iter().map(|&s| f[s]).collect()
    }

    /// CSV export: `step,state,weight,accepted`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"step,state,weight,accepted\n")?;
        for (i, ((&s, &wt), &a)) in
            self.states.iter().zip(&self.weights).zip(&self.accepted).enumerate()
        {
            writeln!(w, "{},{},{},{}", i + 1, s, crate::fmt_sig12(wt), u8::from(a))?;
        }
        Ok(())
    }
}

/// Summary statistics of a trace, JSON-exportable.
#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub acceptance_rate: f64,
    pub occupation: Vec<f64>,
}

impl ChainTrace {
    pub fn summary(&self, n_states: usize) -> TraceSummary {
        TraceSummary {
            steps: self.len(),
            acceptance_rate: self.acceptance_rate(),
            occupation: self.occupation(n_states),
        }
    }
}

fn draw_categorical(rng: &mut Pcg64, probs: &[f64]) -> usize {
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

/// Runs the pseudo-marginal algorithm: propose from `q`, draw a fresh
/// weight for the proposal, accept with `min{1, r(x,y) u / w}`.
///
/// The initial weight is drawn fresh from the initial state's sampler
/// (it only affects burn-in).
pub fn run_pseudo_marginal(
    chain: &MarginalChain,
    samplers: &[WeightSampler],
    steps: usize,
    spec: RngSpec,
    init: usize,
) -> ChainTrace {
    assert_eq!(samplers.len(), chain.n(), "one weight sampler per state");
    assert!(init < chain.n() && chain.pi()[init] > 0.0, "invalid initial state");
    assert!(steps >= 1);
    let mut rng = spec.rng();
    let mut x = init;
    let mut w = samplers[x].sample(&mut rng);
    let init_weight = w;

    let mut states = Vec::with_capacity(steps);
    let mut weights = Vec::with_capacity(steps);
    let mut accepted = Vec::with_capacity(steps);
    for _ in 0..steps {
        let y = draw_categorical(&mut rng, &chain.q()[x]);
        let u = samplers[y].sample(&mut rng);
        let coin: f64 = rng.random();
        let take = coin < chain.ratio(x, y) * u / w;
        if take {
            x = y;
            w = u;
        }
        states.push(x);
        weights.push(w);
        accepted.push(take);
    }
    ChainTrace { init_state: init, init_weight, states, weights, accepted }
}

/// Runs the marginal Metropolis-Hastings algorithm. Consumes the same
/// draw stream as `run_pseudo_marginal` with noiseless samplers, so the
/// two produce identical traces under a shared `RngSpec`.
pub fn run_marginal_mh(
    chain: &MarginalChain,
    steps: usize,
    spec: RngSpec,
    init: usize,
) -> ChainTrace {
    assert!(init < chain.n() && chain.pi()[init] > 0.0, "invalid initial state");
    assert!(steps >= 1);
    let mut rng = spec.rng();
    let mut x = init;
    let mut states = Vec::with_capacity(steps);
    let mut accepted = Vec::with_capacity(steps);
    for _ in 0..steps {
        let y = draw_categorical(&mut rng, &chain.q()[x]);
        let coin: f64 = rng.random();
        let take = coin < chain.ratio(x, y);
        if take {
            x = y;
        }
        states.push(x);
        accepted.push(take);
    }
    ChainTrace {
        init_state: init,
        init_weight: 1.0,
        weights: vec![1.0; steps],
        states,
        accepted,
    }
}

/// Runs the refreshed-ratio algorithm: the acceptance ratio is perturbed
/// afresh by the pair sampler at every attempt, and no weight is carried.
///
/// The caller is responsible for the samplers satisfying the reversibility
/// condition (discrete families can be checked exactly; the common
/// lognormal family satisfies it by construction).
pub fn run_ring(
    chain: &MarginalChain,
    samplers: &[Vec<WeightSampler>],
    steps: usize,
    spec: RngSpec,
    init: usize,
) -> ChainTrace {
    assert_eq!(samplers.len(), chain.n(), "one sampler row per state");
    assert!(init < chain.n() && chain.pi()[init] > 0.0, "invalid initial state");
    assert!(steps >= 1);
    let mut rng = spec.rng();
    let mut x = init;
    let mut states = Vec::with_capacity(steps);
    let mut weights = Vec::with_capacity(steps);
    let mut accepted = Vec::with_capacity(steps);
    for _ in 0..steps {
        let y = draw_categorical(&mut rng, &chain.q()[x]);
        let varpi = samplers[x][y].sample(&mut rng);
        let coin: f64 = rng.random();
        let take = coin < chain.ratio(x, y) * varpi;
        if take {
            x = y;
        }
        states.push(x);
        weights.push(varpi);
        accepted.push(take);
    }
    ChainTrace { init_state: init, init_weight: 1.0, states, weights, accepted }
}

/// Batch-means estimate of mean and asymptotic variance.
#[derive(Debug, Clone, Serialize)]
pub struct BatchMeans {
    pub mean: f64,
    /// `L * sample variance of the batch means`.
    pub asvar: f64,
    /// Heuristic spread of the `asvar` estimate itself,
    /// `asvar * sqrt(2 / num_batches)`; meant for setting tolerances.
    pub stderr: f64,
    pub batch_len: usize,
    pub num_batches: usize,
}

/// Splits `values` into `num_batches` equal batches (trailing remainder
/// dropped) and estimates the asymptotic variance from the batch means.
pub fn batch_means(values: &[f64], num_batches: usize) -> Result<BatchMeans, SamplerError> {
    let batch_len = values.len() / num_batches.max(1);
    if num_batches < 2 || batch_len < 1 {
        return Err(SamplerError::TooFewValues {
            len: values.len(),
            batches: num_batches,
            needed: num_batches.max(2),
        });
    }
    let means: Vec<f64> = (0..num_batches)
        .map(|b| {
            values[b * batch_len..(b + 1) * batch_len].iter().sum::<f64>() / batch_len as f64
        })
        .collect();
    let mean = means.iter().sum::<f64>() / num_batches as f64;
    let var_bm = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>()
        / (num_batches - 1) as f64;
    let asvar = batch_len as f64 * var_bm;
    Ok(BatchMeans {
        mean,
        asvar,
        stderr: asvar * (2.0 / num_batches as f64).sqrt(),
        batch_len,
        num_batches,
    })
}
