#!/usr/bin/env python3
"""Smoke test for the pmorder_py extension module.

Builds nothing itself: run `cargo build -p pmorder-python` (or `--release`)
first, then `python3 python/smoke_test.py`. The script locates the cdylib
in target/, imports it, and exercises the main types end to end.
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile


def load_module():
    root = pathlib.Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libpmorder_py.so", "pmorder_py.so", "libpmorder_py.dylib")
    ]
    lib = next((c for c in candidates if c.exists()), None)
    if lib is None:
        sys.exit("build the extension first: cargo build -p pmorder-python")
    tmp = pathlib.Path(tempfile.mkdtemp(prefix="pmorder-py-"))
    target = tmp / "pmorder_py.so"
    shutil.copyfile(lib, target)
    spec = importlib.util.spec_from_file_location("pmorder_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    pm = load_module()

    # weight laws and the convex order
    delta = pm.DiscreteDistribution.delta(1.0)
    q = pm.DiscreteDistribution([0.5, 2.0], [2 / 3, 1 / 3])
    approx(q.mean(), 1.0, 1e-12)
    approx(q.stop_loss(1.0), 1 / 3, 1e-12)
    assert pm.convex_order_leq(delta, q) == "holds"
    assert pm.convex_order_leq(q, delta) == "fails"
    round_trip = pm.DiscreteDistribution.from_json(q.to_json())
    approx(round_trip.variance(), q.variance(), 1e-15)
    print("PASS weight laws and convex order")

    # majorization and averaging
    assert pm.majorizes([0.5, 0.5], [2 / 3, 1 / 3])
    assert not pm.majorizes([0.5, 0.3, 0.2], [0.4, 0.4, 0.2])
    avg = pm.averaged_law(q, [0.5, 0.5])
    assert pm.convex_order_leq(avg, q) == "holds"
    print("PASS majorization and averaging")

    # martingale coupling
    q2 = pm.DiscreteDistribution([0.0, 3.0], [2 / 3, 1 / 3])
    coupling = pm.build_martingale_coupling(q, q2)
    passes, marginal, martingale, negativity = pm.verify_martingale_coupling(coupling, q, q2)
    assert passes, (marginal, martingale, negativity)
    approx(coupling.joint[0][0], 5 / 9, 1e-9)
    print("PASS martingale coupling")

    # the two-state independence chain and its exact variances
    chain = pm.MarginalChain(["-1", "+1"], [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])

    def two_point(a, b):
        return pm.DiscreteDistribution([a, b], [(b - 1) / (b - a), (1 - a) / (b - a)])

    def chain_variance(a, b):
        law = two_point(a, b)
        kernel = pm.pseudo_marginal_kernel(chain, [law, law])
        f = kernel.lift([-1.0, 1.0])
        return pm.asymptotic_variance(kernel.kernel, f, 1.0)

    v1 = chain_variance(0.9208, 3.0046)
    v2 = chain_variance(0.6698, 1.4620)
    approx(v1, 1.4577, 2e-3)
    approx(v2, 1.5632, 2e-3)
    assert v1 < v2
    assert two_point(0.9208, 3.0046).variance() > two_point(0.6698, 1.4620).variance()
    print(f"PASS counterexample variances ({v1:.4f} < {v2:.4f})")

    # spectral surface
    marginal_kernel = pm.marginal_mh_kernel(chain)
    assert pm.check_reversibility(marginal_kernel) < 1e-12
    right, left, absolute, eigenvalues = pm.spectral_gaps(marginal_kernel)
    approx(right, 1.0, 1e-12)  # iid kernel
    approx(pm.dirichlet_form(marginal_kernel, [1.0, -1.0]), 1.0, 1e-12)
    alpha_xy, alpha = pm.acceptance_rates(chain, [two_point(0.5, 2.0)] * 2)
    assert 0.0 < alpha <= 1.0
    print("PASS spectral quantities")

    # simulation and batch means
    law = two_point(0.9208, 3.0046)
    trace = pm.run_pseudo_marginal(chain, [law, law], 600000, seed=7)
    mean, asvar, stderr = pm.batch_means(trace.f_values([-1.0, 1.0]), 600)
    assert abs(asvar - v1) < 4 * stderr, (asvar, v1, stderr)
    occ = trace.occupation(2)
    assert abs(occ[0] - 0.5) < 0.02
    print(f"PASS simulation (batch-means asvar {asvar:.3f} vs exact {v1:.3f})")

    # stratified ABC estimator laws
    params = pm.GandKParams(0.0, 1.0, 0.8, 0.4, 0.2)
    approx(pm.gk_inverse_cdf(0.5, params), 0.0, 1e-12)
    lo, hi = pm.acceptance_region(params, 0.0, 0.5)
    assert 0.0 < lo < hi < 1.0
    plain, strat, p_bar, qs = pm.estimator_laws(4, (lo, hi), 4)
    approx(p_bar, hi - lo, 1e-12)
    assert pm.convex_order_leq(strat, plain) == "holds"
    assert pm.majorizes([p_bar] * 4, qs)
    print("PASS stratified ABC estimator laws")

    # extremal laws
    vmin, vmax = pm.extremal_bounded(1.0, 0.5, 2.0)
    assert pm.convex_order_leq(vmin, q) == "holds"
    assert pm.convex_order_leq(q, vmax) == "holds"
    value, law = pm.extremal_var_constrained(1.0, 0.25, 0.0, 4.0, 2.0)
    approx(value, 0.5 * (-1.0 + math.sqrt(1.25)), 1e-12)
    approx(pm.supremal_cdf(1.0, 3.0), 0.5 + 1.0 / math.sqrt(5.0), 1e-12)
    print("PASS extremal laws")

    print("smoke test ok")


if __name__ == "__main__":
    main()
