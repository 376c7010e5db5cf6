//! Python bindings for the finite-state pseudo-marginal analysis toolkit:
//! weight laws and the convex order, martingale couplings, exact kernels,
//! spectral quantities, and seeded simulation.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pmorder_core::{abc, chains, coupling, samplers, spectral, weightdist};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Finite-support probability law on the nonnegative reals.
#[pyclass(name = "DiscreteDistribution", from_py_object)]
#[derive(Clone)]
struct PyDiscreteDistribution {
    inner: weightdist::DiscreteDistribution,
}

#[pymethods]
impl PyDiscreteDistribution {
    #[new]
    fn new(atoms: Vec<f64>, probs: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: weightdist::DiscreteDistribution::new(atoms, probs).map_err(value_err)? })
    }

    #[staticmethod]
    fn delta(w: f64) -> Self {
        Self { inner: weightdist::DiscreteDistribution::delta(w) }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(value_err)? })
    }

    #[getter]
    fn atoms(&self) -> Vec<f64> {
        self.inner.atoms().to_vec()
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    fn stop_loss(&self, t: f64) -> f64 {
        self.inner.stop_loss(t)
    }

    fn scale(&self, c: f64) -> Self {
        Self { inner: self.inner.scale(c) }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("DiscreteDistribution(atoms={:?}, probs={:?})", self.inner.atoms(), self.inner.probs())
    }
}

/// Decides `q1 <=cx q2`; returns "holds", "fails" or "means_differ".
#[pyfunction]
fn convex_order_leq(q1: &PyDiscreteDistribution, q2: &PyDiscreteDistribution) -> &'static str {
    match weightdist::convex_order_leq(&q1.inner, &q2.inner) {
        weightdist::CxVerdict::Holds => "holds",
        weightdist::CxVerdict::Fails => "fails",
        weightdist::CxVerdict::MeansDiffer => "means_differ",
    }
}

/// Majorization of `lambda` by `mu` via descending partial sums.
#[pyfunction]
fn majorizes(lambda: Vec<f64>, mu: Vec<f64>) -> PyResult<bool> {
    weightdist::majorizes(&lambda, &mu).map_err(value_err)
}

/// Exact law of `sum_i lambda_i Z_i` with `Z_i` iid from `q`.
#[pyfunction]
fn averaged_law(q: &PyDiscreteDistribution, lambda: Vec<f64>) -> PyResult<PyDiscreteDistribution> {
    let weights = weightdist::SimplexWeights::new(lambda).map_err(value_err)?;
    Ok(PyDiscreteDistribution {
        inner: weightdist::averaged_law(&q.inner, &weights).map_err(value_err)?,
    })
}

/// Convex-order extremal laws with mean `mu` on `[a, b]`.
#[pyfunction]
fn extremal_bounded(
    mu: f64,
    a: f64,
    b: f64,
) -> PyResult<(PyDiscreteDistribution, PyDiscreteDistribution)> {
    let (min, max) = weightdist::extremal_bounded(mu, a, b).map_err(value_err)?;
    Ok((PyDiscreteDistribution { inner: min }, PyDiscreteDistribution { inner: max }))
}

/// Maximal stop-loss at `t` under mean/variance/support constraints.
#[pyfunction]
fn extremal_var_constrained(
    mu: f64,
    sigma2: f64,
    a: f64,
    b: f64,
    t: f64,
) -> PyResult<(f64, PyDiscreteDistribution)> {
    let r = weightdist::extremal_var_constrained(mu, sigma2, a, b, t).map_err(value_err)?;
    Ok((r.value, PyDiscreteDistribution { inner: r.law }))
}

/// Cdf of the supremal unit-mean law with variance parameter `sigma2`.
#[pyfunction]
fn supremal_cdf(sigma2: f64, t: f64) -> f64 {
    weightdist::supremal_cdf(sigma2, t)
}

/// Joint law of a martingale pair realizing the convex order.
#[pyclass(name = "MartingaleCoupling", from_py_object)]
#[derive(Clone)]
struct PyMartingaleCoupling {
    inner: coupling::MartingaleCoupling,
}

#[pymethods]
impl PyMartingaleCoupling {
    #[getter]
    fn row_atoms(&self) -> Vec<f64> {
        self.inner.row_atoms().to_vec()
    }

    #[getter]
    fn col_atoms(&self) -> Vec<f64> {
        self.inner.col_atoms().to_vec()
    }

    #[getter]
    fn joint(&self) -> Vec<Vec<f64>> {
        self.inner.joint().to_vec()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }
}

#[pyfunction]
fn build_martingale_coupling(
    q1: &PyDiscreteDistribution,
    q2: &PyDiscreteDistribution,
) -> PyResult<PyMartingaleCoupling> {
    Ok(PyMartingaleCoupling {
        inner: coupling::build_martingale_coupling(&q1.inner, &q2.inner).map_err(value_err)?,
    })
}

/// Returns `(passes, max_marginal, max_martingale, max_negativity)`.
#[pyfunction]
fn verify_martingale_coupling(
    r: &PyMartingaleCoupling,
    q1: &PyDiscreteDistribution,
    q2: &PyDiscreteDistribution,
) -> PyResult<(bool, f64, f64, f64)> {
    let report =
        coupling::verify_martingale_coupling(&r.inner, &q1.inner, &q2.inner).map_err(value_err)?;
    Ok((
        report.passes,
        report.max_marginal_violation,
        report.max_martingale_violation,
        report.max_negativity,
    ))
}

/// Finite state space with target and proposal matrix.
#[pyclass(name = "MarginalChain", from_py_object)]
#[derive(Clone)]
struct PyMarginalChain {
    inner: chains::MarginalChain,
}

#[pymethods]
impl PyMarginalChain {
    #[new]
    fn new(states: Vec<String>, pi: Vec<f64>, q: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: chains::MarginalChain::new(states, pi, q).map_err(value_err)? })
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.inner.pi().to_vec()
    }

    fn ratio(&self, x: usize, y: usize) -> f64 {
        self.inner.ratio(x, y)
    }
}

/// Labeled row-stochastic matrix with its invariant law.
#[pyclass(name = "FiniteKernel", from_py_object)]
#[derive(Clone)]
struct PyFiniteKernel {
    inner: chains::FiniteKernel,
}

#[pymethods]
impl PyFiniteKernel {
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn matrix(&self) -> Vec<Vec<f64>> {
        self.inner.matrix().to_vec()
    }

    #[getter]
    fn invariant(&self) -> Vec<f64> {
        self.inner.invariant().to_vec()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(value_err)?;
        String::from_utf8(buf).map_err(value_err)
    }
}

/// Pseudo-marginal kernel with its pair-state bookkeeping.
#[pyclass(name = "PseudoMarginalKernel")]
struct PyPseudoMarginalKernel {
    inner: chains::PseudoMarginalKernel,
}

#[pymethods]
impl PyPseudoMarginalKernel {
    #[getter]
    fn kernel(&self) -> PyFiniteKernel {
        PyFiniteKernel { inner: self.inner.kernel.clone() }
    }

    #[getter]
    fn pairs(&self) -> Vec<(usize, usize)> {
        self.inner.pairs.clone()
    }

    #[getter]
    fn rejection(&self) -> Vec<f64> {
        self.inner.rejection.clone()
    }

    fn max_rejection(&self) -> f64 {
        self.inner.max_rejection()
    }

    /// Lifts a function on chain states to the pair state space.
    fn lift(&self, f: Vec<f64>) -> Vec<f64> {
        self.inner.lift(&f)
    }
}

#[pyfunction]
fn marginal_mh_kernel(chain: &PyMarginalChain) -> PyFiniteKernel {
    PyFiniteKernel { inner: chains::marginal_mh_kernel(&chain.inner) }
}

#[pyfunction]
fn pseudo_marginal_kernel(
    chain: &PyMarginalChain,
    laws: Vec<PyDiscreteDistribution>,
) -> PyResult<PyPseudoMarginalKernel> {
    let assignment = chains::WeightAssignment::new(laws.into_iter().map(|l| l.inner).collect())
        .map_err(value_err)?;
    Ok(PyPseudoMarginalKernel {
        inner: chains::pseudo_marginal_kernel(&chain.inner, &assignment).map_err(value_err)?,
    })
}

/// Returns `(alpha_xy, alpha)`: conditional and expected acceptance rates.
#[pyfunction]
fn acceptance_rates(
    chain: &PyMarginalChain,
    laws: Vec<PyDiscreteDistribution>,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let assignment = chains::WeightAssignment::new(laws.into_iter().map(|l| l.inner).collect())
        .map_err(value_err)?;
    Ok(chains::acceptance_rates(&chain.inner, &assignment))
}

#[pyfunction]
fn check_reversibility(kernel: &PyFiniteKernel) -> f64 {
    spectral::check_reversibility(&kernel.inner)
}

#[pyfunction]
fn dirichlet_form(kernel: &PyFiniteKernel, f: Vec<f64>) -> PyResult<f64> {
    spectral::dirichlet_form(&kernel.inner, &f).map_err(value_err)
}

/// Returns `(right_gap, left_gap, absolute_gap, eigenvalues)`.
#[pyfunction]
fn spectral_gaps(kernel: &PyFiniteKernel) -> PyResult<(f64, f64, f64, Vec<f64>)> {
    let r = spectral::spectral_gaps(&kernel.inner).map_err(value_err)?;
    Ok((r.right_gap, r.left_gap, r.absolute_gap, r.eigenvalues))
}

#[pyfunction]
fn asymptotic_variance(kernel: &PyFiniteKernel, f: Vec<f64>, lambda: f64) -> PyResult<f64> {
    spectral::asymptotic_variance(&kernel.inner, &f, lambda).map_err(value_err)
}

#[pyfunction]
fn truncated_acf_variance(kernel: &PyFiniteKernel, f: Vec<f64>, lag_max: usize) -> PyResult<f64> {
    spectral::truncated_acf_variance(&kernel.inner, &f, lag_max).map_err(value_err)
}

/// Realized path of a simulation run.
#[pyclass(name = "ChainTrace")]
struct PyChainTrace {
    inner: samplers::ChainTrace,
}

#[pymethods]
impl PyChainTrace {
    #[getter]
    fn states(&self) -> Vec<usize> {
        self.inner.states.clone()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn accepted(&self) -> Vec<bool> {
        self.inner.accepted.clone()
    }

    fn acceptance_rate(&self) -> f64 {
        self.inner.acceptance_rate()
    }

    fn occupation(&self, n: usize) -> Vec<f64> {
        self.inner.occupation(n)
    }

    fn f_values(&self, f: Vec<f64>) -> Vec<f64> {
        self.inner.f_values(&f)
    }
}

/// Runs the pseudo-marginal algorithm with per-state finite weight laws.
#[pyfunction]
#[pyo3(signature = (chain, laws, steps, seed, stream=0, init=0))]
fn run_pseudo_marginal(
    chain: &PyMarginalChain,
    laws: Vec<PyDiscreteDistribution>,
    steps: usize,
    seed: u64,
    stream: u64,
    init: usize,
) -> PyResult<PyChainTrace> {
    let ws: Result<Vec<_>, _> =
        laws.into_iter().map(|l| samplers::WeightSampler::discrete(l.inner)).collect();
    let trace = samplers::run_pseudo_marginal(
        &chain.inner,
        &ws.map_err(value_err)?,
        steps,
        samplers::RngSpec::new(seed, stream),
        init,
    );
    Ok(PyChainTrace { inner: trace })
}

/// Returns `(mean, asvar, stderr)` of the batch-means estimator.
#[pyfunction]
fn batch_means(values: Vec<f64>, num_batches: usize) -> PyResult<(f64, f64, f64)> {
    let bm = samplers::batch_means(&values, num_batches).map_err(value_err)?;
    Ok((bm.mean, bm.asvar, bm.stderr))
}

/// g-and-k quantile-distribution parameters.
#[pyclass(name = "GandKParams", from_py_object)]
#[derive(Clone)]
struct PyGandKParams {
    inner: abc::GandKParams,
}

#[pymethods]
impl PyGandKParams {
    #[new]
    fn new(loc: f64, scale: f64, c: f64, g: f64, k: f64) -> PyResult<Self> {
        Ok(Self { inner: abc::GandKParams::new(loc, scale, c, g, k).map_err(value_err)? })
    }
}

#[pyfunction]
fn gk_inverse_cdf(u: f64, params: &PyGandKParams) -> PyResult<f64> {
    abc::gk_inverse_cdf(u, &params.inner).map_err(value_err)
}

/// The u-interval accepted within `eps` of `ystar`.
#[pyfunction]
fn acceptance_region(params: &PyGandKParams, ystar: f64, eps: f64) -> PyResult<(f64, f64)> {
    abc::acceptance_region(&params.inner, ystar, eps).map_err(value_err)
}

/// Returns `(plain, stratified, p_bar, strata_probs)`.
#[pyfunction]
fn estimator_laws(
    n: usize,
    region: (f64, f64),
    strata: usize,
) -> PyResult<(PyDiscreteDistribution, PyDiscreteDistribution, f64, Vec<f64>)> {
    let laws =
        abc::estimator_laws(n, region, &abc::StrataSpec::new(strata)).map_err(value_err)?;
    Ok((
        PyDiscreteDistribution { inner: laws.plain },
        PyDiscreteDistribution { inner: laws.stratified },
        laws.p_bar,
        laws.strata_probs,
    ))
}

#[pymodule]
fn pmorder_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDiscreteDistribution>()?;
    m.add_class::<PyMartingaleCoupling>()?;
    m.add_class::<PyMarginalChain>()?;
    m.add_class::<PyFiniteKernel>()?;
    m.add_class::<PyPseudoMarginalKernel>()?;
    m.add_class::<PyChainTrace>()?;
    m.add_class::<PyGandKParams>()?;
    m.add_function(wrap_pyfunction!(convex_order_leq, m)?)?;
    m.add_function(wrap_pyfunction!(majorizes, m)?)?;
    m.add_function(wrap_pyfunction!(averaged_law, m)?)?;
    m.add_function(wrap_pyfunction!(extremal_bounded, m)?)?;
    m.add_function(wrap_pyfunction!(extremal_var_constrained, m)?)?;
    m.add_function(wrap_pyfunction!(supremal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(build_martingale_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(verify_martingale_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_mh_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_marginal_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance_rates, m)?)?;
    m.add_function(wrap_pyfunction!(check_reversibility, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_form, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_gaps, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_variance, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_acf_variance, m)?)?;
    m.add_function(wrap_pyfunction!(run_pseudo_marginal, m)?)?;
    m.add_function(wrap_pyfunction!(batch_means, m)?)?;
    m.add_function(wrap_pyfunction!(gk_inverse_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance_region, m)?)?;
    m.add_function(wrap_pyfunction!(estimator_laws, m)?)?;
    Ok(())
}
