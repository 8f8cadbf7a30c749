"""Acceptance suite: every top-level criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion.
"""

import time

import numpy as np
from scipy.stats import norm

from filterlab.filters import GridSpec, kalman_static, run_grid_filter
from filterlab.measures import (
    DensityFn,
    DiscreteMeasure,
    GaussianMeasure,
    bl_distance,
    discretize,
    tv_distance,
)
from filterlab.models import (
    ARKernel,
    ar_kernel_tv,
    assumption_report,
    char_fn_min,
    kernel_tv_modulus,
    simulate_path,
)
from filterlab.presets import get_preset
from filterlab.stability import (
    TwinRunConfig,
    check_coupling_bound,
    estimate_rate,
    filter_predictor_tv_check,
    liminf_constant,
    twin_run,
)

from oracles import bl_lattice_dp, kernel_tv_direct, tv_gaussians_quad


def report(criterion: str, passed: bool, detail: str):
    print(f"\n{'PASS' if passed else 'FAIL'} {criterion}: {detail}")
    assert passed, f"{criterion}: {detail}"


def test_criterion_1_rate_example():
    t0 = time.perf_counter()
    p = get_preset("static-gaussian")
    cfg = TwinRunConfig(spec=p.spec, prior_mu=p.prior_mu, prior_nu=p.prior_nu,
                        horizon=2000, seed=42, method="kalman-static")
    trace = twin_run(cfg)
    x0 = trace.x0
    target = p.static_model.liminf_target(x0)  # |sin x0| for these parameters
    estimate = liminf_constant(trace, p.static_model, x0, tail_fraction=0.5)
    ratio = estimate / target

    fit = estimate_rate(trace.bl, (100, 1999))
    elapsed = time.perf_counter() - t0

    ok = (abs(ratio - 1.0) <= 0.25
          and fit.classification == "polynomial"
          and -1.5 <= fit.slope <= -0.5
          and elapsed < 5.0)
    report("criterion 1 (O(1/n) rate example)", ok,
           f"liminf ratio {ratio:.3f} (band 0.75..1.25), class {fit.classification}, "
           f"slope {fit.slope:.3f}, {elapsed:.2f}s")


def test_criterion_2_grid_vs_closed_form():
    t0 = time.perf_counter()
    p = get_preset("static-gaussian")
    _, obs = simulate_path(p.spec, 100, 123)
    pairs = run_grid_filter(p.spec, obs, p.prior_mu, GridSpec(-10.0, 0.005, 4001))
    closed = kalman_static(p.static_model, p.static_model.alpha, obs)
    mean_err = max(abs(f.measure.mean() - k.mean) for (_, f), k in zip(pairs, closed))
    var_err = max(abs(f.measure.variance() - k.variance)
                  for (_, f), k in zip(pairs, closed))
    elapsed = time.perf_counter() - t0
    ok = mean_err < 1e-3 and var_err < 1e-3 and elapsed < 10.0
    report("criterion 2 (grid filter vs closed form)", ok,
           f"max mean err {mean_err:.2e}, max var err {var_err:.2e}, {elapsed:.2f}s")


def test_criterion_3_bl_oracles():
    worst_dirac = 0.0
    for t in (0.1, 0.5, 1.0, 2.0, 3.0, 5.0):
        got = bl_distance(DiscreteMeasure([0.0], [1.0]), DiscreteMeasure([t], [1.0]))
        worst_dirac = max(worst_dirac, abs(got - min(2.0, t)))

    rng = np.random.default_rng(42)
    worst_lattice = 0.0
    for _ in range(50):
        na, nb = rng.integers(1, 5, size=2)
        a = DiscreteMeasure(rng.uniform(-3, 3, na), rng.dirichlet(np.ones(na)))
        b = DiscreteMeasure(rng.uniform(-3, 3, nb), rng.dirichlet(np.ones(nb)))
        lp = bl_distance(a, b)
        atoms = np.concatenate([a.points, b.points])
        signed = np.concatenate([a.weights, -b.weights])
        dp = bl_lattice_dp(atoms, signed, step=2e-4)
        worst_lattice = max(worst_lattice, abs(lp - dp))

    ok = worst_dirac < 1e-9 and worst_lattice < 1e-3
    report("criterion 3 (BL oracle equivalence)", ok,
           f"dirac err {worst_dirac:.2e} (tol 1e-9), "
           f"lattice err {worst_lattice:.2e} over 50 pairs (tol 1e-3)")


def test_criterion_4_tv_oracles():
    rng = np.random.default_rng(7)
    worst_gauss = 0.0
    for _ in range(20):
        m1, m2 = rng.uniform(-4, 4, size=2)
        s = rng.uniform(0.2, 3.0)
        got = tv_distance(GaussianMeasure(m1, s * s), GaussianMeasure(m2, s * s))
        formula = 2.0 * (2.0 * norm.cdf(abs(m1 - m2) / (2 * s)) - 1.0)
        quad_oracle = tv_gaussians_quad(m1, s, m2, s)
        worst_gauss = max(worst_gauss, abs(got - formula), abs(got - quad_oracle))

    worst_ar = 0.0
    for _ in range(50):
        a, c = rng.uniform(-1, 1, size=2)
        s0, s1 = rng.uniform(0.5, 2.0), rng.uniform(0.0, 1.0)
        kernel = ARKernel(
            drift=lambda x, a=a, c=c: a * np.asarray(x, dtype=float) + c,
            dispersion=lambda x, s0=s0, s1=s1: s0 + s1 / (1.0 + np.asarray(x, dtype=float) ** 2),
            noise=DensityFn.gaussian(1.0),
            alpha=s0,
        )
        x, xp = rng.uniform(-3, 3, size=2)
        worst_ar = max(worst_ar, abs(ar_kernel_tv(kernel, x, xp)
                                     - kernel_tv_direct(kernel, x, xp)))

    ok = worst_gauss < 1e-6 and worst_ar < 1e-4
    report("criterion 4 (TV oracles)", ok,
           f"gaussian err {worst_gauss:.2e} over 20 pairs (tol 1e-6), "
           f"change-of-variables err {worst_ar:.2e} over 50 AR instances (tol 1e-4)")


def test_criterion_5_low_snr_stability():
    t0 = time.perf_counter()
    p = get_preset("ar-random-walk", obs_noise_std=5.0)
    prior_mu = GaussianMeasure(-2.0, 1.0)
    prior_nu = GaussianMeasure(2.0, 1.0)
    prior_tv = tv_distance(prior_mu, prior_nu)
    finals = []
    for seed in range(20):
        cfg = TwinRunConfig(spec=p.spec, prior_mu=prior_mu, prior_nu=prior_nu,
                            horizon=200, seed=seed, method="grid",
                            distances=("tv",), grid=p.grid)
        finals.append(twin_run(cfg).tv[-1])
    mean_final = float(np.mean(finals))
    elapsed = time.perf_counter() - t0
    ok = mean_final < 0.1 * prior_tv and elapsed < 120.0
    report("criterion 5 (TV stability at low SNR)", ok,
           f"mean tv_200 {mean_final:.4g} < 0.1 x tv(mu,nu) = {0.1 * prior_tv:.4g} "
           f"over 20 seeds, {elapsed:.1f}s")


def test_criterion_6_blind_channel_never_forgets():
    p = get_preset("counterexample-blind")
    cfg = TwinRunConfig(spec=p.spec, prior_mu=p.prior_mu, prior_nu=p.prior_nu,
                        horizon=100, seed=1, method="grid", grid=p.grid,
                        distances=("tv",))
    trace = twin_run(cfg)
    mu_g = discretize(p.prior_mu, p.grid.origin, p.grid.spacing, p.grid.count)
    nu_g = discretize(p.prior_nu, p.grid.origin, p.grid.spacing, p.grid.count)
    prior_tv = tv_distance(mu_g, nu_g)
    dev = float(np.max(np.abs(trace.tv - prior_tv)))
    ok = dev < 1e-9
    report("criterion 6 (no forgetting without informative observations)", ok,
           f"max |tv_n - tv(mu,nu)| = {dev:.2e} over 100 steps (tol 1e-9)")


def test_criterion_7_inequality_suites():
    rng = np.random.default_rng(2024)
    ident = lambda x: np.asarray(x, dtype=float)
    channel = get_preset("static-gaussian").spec.channel
    y_grid = np.linspace(-12.0, 12.0, 241)

    coupling_failures = 0
    for _ in range(200):
        n, m = rng.integers(1, 4, size=2)
        rho = DiscreteMeasure(rng.uniform(-3, 3, n), rng.dirichlet(np.ones(n)))
        rho_p = DiscreteMeasure(rng.uniform(-3, 3, m), rng.dirichlet(np.ones(m)))
        if rng.uniform() < 0.5:
            coupling = rho.weights[:, None] * rho_p.weights[None, :]  # independent
        else:  # greedy monotone coupling
            coupling = _monotone_coupling(rho.weights, rho_p.weights)
        res = check_coupling_bound(rho, rho_p, coupling, channel, y_grid)
        coupling_failures += not res.passed

    fp_failures = 0
    presets = [get_preset("static-gaussian"), get_preset("ar-contracting")]
    for i in range(20):
        p = presets[i % 2]
        res = filter_predictor_tv_check(p.spec, p.prior_mu, p.prior_nu,
                                        n=1 + i % 4, n_obs_draws=1000,
                                        seed=300 + i, grid=p.grid)
        fp_failures += not res.passed

    deltas = np.array([0.001, 0.002, 0.004, 0.008, 0.016])
    curve = kernel_tv_modulus(get_preset("ar-random-walk").spec.kernel,
                              deltas, probes=8, seed=5)
    modulus_ok = curve[0] < 0.01 and bool(np.all(np.diff(curve) >= -1e-12))

    ok = coupling_failures == 0 and fp_failures == 0 and modulus_ok
    report("criterion 7 (inequality suites)", ok,
           f"coupling failures {coupling_failures}/200, "
           f"filter-vs-predictor failures {fp_failures}/20, "
           f"modulus(0.001) = {curve[0]:.2e} < 0.01, nonincreasing under halving")


def _monotone_coupling(w_a: np.ndarray, w_b: np.ndarray) -> np.ndarray:
    out = np.zeros((w_a.size, w_b.size))
    a, b = w_a.copy(), w_b.copy()
    i = j = 0
    while i < a.size and j < b.size:
        mass = min(a[i], b[j])
        out[i, j] = mass
        a[i] -= mass
        b[j] -= mass
        if a[i] <= 1e-15:
            i += 1
        if j < b.size and b[j] <= 1e-15:
            j += 1
    return out


def test_criterion_8_assumption_checkers():
    gauss = char_fn_min(DensityFn.gaussian(1.0), freq_max=4.0)
    unif = char_fn_min(DensityFn.uniform(1.0), freq_max=10.0)
    tri = char_fn_min(DensityFn.triangular(1.0), freq_max=10.0)
    blind = {r.name: r for r in assumption_report(
        get_preset("counterexample-blind").spec)}
    inverse_failed = not blind["observation-inverse-roundtrip"].passed

    ok = gauss.passed and not unif.passed and not tri.passed and inverse_failed
    report("criterion 8 (assumption checkers)", ok,
           f"gaussian fourier pass={gauss.passed}, uniform fail={not unif.passed}, "
           f"triangular fail={not tri.passed} (both at freq_max=10), "
           f"blind inverse fail={inverse_failed}")
