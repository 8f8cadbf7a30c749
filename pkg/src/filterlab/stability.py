"""Twin-filter experiments quantifying how filters forget their priors.

A twin run simulates one observation path, runs two filters started from
different priors on that same path, and records their distance at every
step.  Distances decay for informative observation channels (the stability
phenomenon), stay flat for the blind counterexample, and for the static
Gaussian model admit closed forms sharp enough to exhibit the O(1/n) rate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .filters import (
    DegenerateUpdateError,
    FilterState,
    GridSpec,
    kalman_static,
    kernel_matrix,
    observation_predictive,
    predict,
    run_grid_filter,
    run_particle_filter,
    update,
)
from .measures import (
    DiscreteMeasure,
    GaussianMeasure,
    GridDensity,
    Measure,
    bl_distance,
    discretize,
    gaussian_bl_same_variance,
    gaussian_tv_same_variance,
    sample_measure,
    tv_distance,
)
from .models import HMMSpec, ObservationChannel, StaticGaussianModel, simulate_path

__all__ = [
    "TwinRunConfig",
    "StabilityTrace",
    "RateFit",
    "twin_run",
    "cos_bl_lower_bound",
    "estimate_rate",
    "liminf_constant",
    "check_coupling_bound",
    "filter_predictor_tv_check",
    "CouplingCheck",
    "FilterPredictorCheck",
]

METHODS = ("grid", "particle", "kalman-static")


@dataclass
class TwinRunConfig:
    """Everything needed to reproduce one twin-filter experiment.

    Observations are generated under ``prior_mu`` unless ``observation_prior``
    names a third law to simulate under.  Particle twins share propagation
    noise and resampling uniforms (identical seeds), so equal priors give an
    exactly zero trace.
    """

    spec: HMMSpec
    prior_mu: Measure
    prior_nu: Measure
    horizon: int
    seed: int
    method: str = "grid"
    distances: Sequence[str] = ("bl", "tv")
    record_predictor: bool = False
    grid: Optional[GridSpec] = None
    n_particles: int = 1000
    observation_prior: Optional[Measure] = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        bad = set(self.distances) - {"bl", "tv"}
        if bad:
            raise ValueError(f"unknown distances {sorted(bad)}; choose from bl, tv")


@dataclass
class StabilityTrace:
    """Per-step twin-filter distances; NaN marks metrics that were not recorded."""

    step: np.ndarray
    bl: np.ndarray
    tv: np.ndarray
    predictor_bl: np.ndarray
    predictor_tv: np.ndarray
    cos_lower: np.ndarray
    wall_time: np.ndarray
    seed: int
    method: str
    x0: float = float("nan")

    def __post_init__(self):
        n = self.step.size
        for name in ("bl", "tv", "predictor_bl", "predictor_tv", "cos_lower", "wall_time"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.size != n:
                raise ValueError(f"{name} has length {arr.size}, expected {n}")
            setattr(self, name, arr)
        for name in ("bl", "tv", "predictor_bl", "predictor_tv"):
            arr = getattr(self, name)
            vals = arr[np.isfinite(arr)]
            if vals.size and (vals.min() < -1e-12 or vals.max() > 2.0 + 1e-9):
                raise ValueError(f"{name} leaves the valid range [0, 2]")

    @property
    def horizon(self) -> int:
        return self.step.size


@dataclass(frozen=True)
class RateFit:
    """Least-squares decay-rate fit of a distance trace on a step window."""

    slope: float           # log d_n vs log n
    r2: float
    classification: str    # "polynomial" | "exponential" | "non-decaying"
    window: tuple
    loglin_slope: float    # log d_n vs n (exponential-decay probe)
    loglin_r2: float
    n_points: int
    note: str = ""


class CouplingCheck(NamedTuple):
    lhs: float
    rhs: float
    passed: bool


class FilterPredictorCheck(NamedTuple):
    lhs: float
    rhs: float
    passed: bool
    stderr: float
    excluded: int


def cos_bl_lower_bound(z_mu: float, v: float, z_nu: float):
    """exp(-v/2) |cos z_mu - cos z_nu|: the cosine test function's contribution
    to the BL distance between N(z_mu, v) and N(z_nu, v).  Always a lower
    bound, since cos is bounded by 1 with Lipschitz constant 1."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("variance must be nonnegative")
    out = np.exp(-v / 2.0) * np.abs(np.cos(z_mu) - np.cos(z_nu))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Twin runs
# ---------------------------------------------------------------------------


def twin_run(config: TwinRunConfig) -> StabilityTrace:
    """Run the twin-filter experiment described by ``config``."""
    simulation_prior = (config.observation_prior
                        if config.observation_prior is not None else config.prior_mu)
    sim_spec = HMMSpec(config.spec.kernel, config.spec.channel, simulation_prior,
                       config.spec.state_dim, config.spec.obs_dim)
    states, observations = simulate_path(sim_spec, config.horizon, config.seed)

    if config.method == "kalman-static":
        return _twin_run_kalman(config, states, observations)
    if config.method == "grid":
        return _twin_run_grid(config, states, observations)
    return _twin_run_particle(config, states, observations)


def _as_static_gaussian(config: TwinRunConfig) -> StaticGaussianModel:
    mu, nu = config.prior_mu, config.prior_nu
    if not (isinstance(mu, GaussianMeasure) and isinstance(nu, GaussianMeasure)):
        raise ValueError("kalman-static twins need Gaussian priors")
    if abs(mu.variance - nu.variance) > 1e-12:
        raise ValueError("kalman-static twins need equal prior variances")
    ch = config.spec.channel
    probe = np.array([-1.7, 0.3, 2.9])
    if not config.spec.kernel.is_identity:
        raise ValueError("kalman-static twins need the static (identity) kernel")
    if np.max(np.abs(ch.h(probe) - probe)) > 1e-9:
        raise ValueError("kalman-static twins need the identity observation map")
    if abs(ch.noise.std - 1.0) > 1e-6 or abs(ch.noise.mean) > 1e-9:
        raise ValueError("kalman-static twins need unit Gaussian observation noise")
    return StaticGaussianModel(mu.mean, nu.mean, mu.variance)


def _twin_run_kalman(config, states, observations) -> StabilityTrace:
    t0 = time.perf_counter()
    model = _as_static_gaussian(config)
    trace_mu = kalman_static(model, model.alpha, observations)
    trace_nu = kalman_static(model, model.beta, observations)
    z_mu = np.array([s.mean for s in trace_mu])
    z_nu = np.array([s.mean for s in trace_nu])
    v = np.array([s.variance for s in trace_mu])
    n = config.horizon

    nan = np.full(n, np.nan)
    tv = gaussian_tv_same_variance(z_mu - z_nu, np.sqrt(v)) if "tv" in config.distances else nan.copy()
    bl = gaussian_bl_same_variance(z_mu, z_nu, v) if "bl" in config.distances else nan.copy()
    cos_lower = cos_bl_lower_bound(z_mu, v, z_nu)

    pred_bl, pred_tv = nan.copy(), nan.copy()
    if config.record_predictor:
        # static kernel: the step-n predictor equals the step-(n-1) filter,
        # and the step-0 predictor is the prior pair
        s2 = model.sigma2
        pz_mu = np.concatenate([[model.alpha], z_mu[:-1]])
        pz_nu = np.concatenate([[model.beta], z_nu[:-1]])
        pv = np.concatenate([[s2], v[:-1]])
        if "tv" in config.distances:
            pred_tv = gaussian_tv_same_variance(pz_mu - pz_nu, np.sqrt(pv))
        if "bl" in config.distances:
            pred_bl = gaussian_bl_same_variance(pz_mu, pz_nu, pv)

    elapsed = time.perf_counter() - t0
    return StabilityTrace(
        step=np.arange(n), bl=np.asarray(bl), tv=np.asarray(tv),
        predictor_bl=pred_bl, predictor_tv=pred_tv,
        cos_lower=np.asarray(cos_lower),
        wall_time=np.full(n, elapsed / n),
        seed=config.seed, method=config.method, x0=float(states[0]),
    )


def _grid_to_discrete(g: GridDensity, cut: float = 1e-15) -> DiscreteMeasure:
    keep = g.masses > cut
    return DiscreteMeasure(g.points[keep], g.masses[keep])


def _twin_run_grid(config, states, observations) -> StabilityTrace:
    if config.grid is None:
        raise ValueError("grid method needs a GridSpec")
    spec, grid = config.spec, config.grid
    matrix = None
    if not spec.kernel.is_identity:
        matrix = kernel_matrix(spec.kernel, grid)

    n = config.horizon
    nan = np.full(n, np.nan)
    bl, tv = nan.copy(), nan.copy()
    pred_bl, pred_tv = nan.copy(), nan.copy()
    wall = np.zeros(n)

    try:
        pred_mu = FilterState(discretize(config.prior_mu, grid.origin, grid.spacing,
                                         grid.count), 0, "predictor")
    except Exception as err:
        raise ValueError(f"prior mu does not fit the grid: {err}") from err
    try:
        pred_nu = FilterState(discretize(config.prior_nu, grid.origin, grid.spacing,
                                         grid.count), 0, "predictor")
    except Exception as err:
        raise ValueError(f"prior nu does not fit the grid: {err}") from err

    filt_mu = filt_nu = None
    for k, y in enumerate(observations):
        t0 = time.perf_counter()
        if k > 0:
            pred_mu = predict(filt_mu, spec.kernel, matrix=matrix)
            pred_nu = predict(filt_nu, spec.kernel, matrix=matrix)
        try:
            filt_mu = update(pred_mu, float(y), spec.channel)
        except DegenerateUpdateError as err:
            raise DegenerateUpdateError(f"step {k}, prior mu: {err}") from None
        try:
            filt_nu = update(pred_nu, float(y), spec.channel)
        except DegenerateUpdateError as err:
            raise DegenerateUpdateError(f"step {k}, prior nu: {err}") from None

        if "tv" in config.distances:
            tv[k] = tv_distance(filt_mu.measure, filt_nu.measure)
            if config.record_predictor:
                pred_tv[k] = tv_distance(pred_mu.measure, pred_nu.measure)
        if "bl" in config.distances:
            bl[k] = bl_distance(_grid_to_discrete(filt_mu.measure),
                                _grid_to_discrete(filt_nu.measure))
            if config.record_predictor:
                pred_bl[k] = bl_distance(_grid_to_discrete(pred_mu.measure),
                                         _grid_to_discrete(pred_nu.measure))
        wall[k] = time.perf_counter() - t0

    return StabilityTrace(
        step=np.arange(n), bl=bl, tv=tv, predictor_bl=pred_bl, predictor_tv=pred_tv,
        cos_lower=nan.copy(), wall_time=wall,
        seed=config.seed, method=config.method, x0=float(states[0]),
    )


def _twin_run_particle(config, states, observations) -> StabilityTrace:
    spec = config.spec
    if "tv" in config.distances and config.grid is None:
        raise ValueError("particle twins record tv on a shared grid; provide one")

    pairs_mu = run_particle_filter(spec, observations, config.prior_mu,
                                   config.n_particles, config.seed)
    pairs_nu = run_particle_filter(spec, observations, config.prior_nu,
                                   config.n_particles, config.seed)

    n = config.horizon
    nan = np.full(n, np.nan)
    bl, tv = nan.copy(), nan.copy()
    pred_bl, pred_tv = nan.copy(), nan.copy()
    wall = np.zeros(n)
    g = config.grid

    def grid_tv(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
        return tv_distance(discretize(a, g.origin, g.spacing, g.count),
                           discretize(b, g.origin, g.spacing, g.count))

    for k in range(n):
        t0 = time.perf_counter()
        (p_mu, f_mu), (p_nu, f_nu) = pairs_mu[k], pairs_nu[k]
        if "tv" in config.distances:
            tv[k] = grid_tv(f_mu.measure, f_nu.measure)
            if config.record_predictor:
                pred_tv[k] = grid_tv(p_mu.measure, p_nu.measure)
        if "bl" in config.distances:
            bl[k] = bl_distance(f_mu.measure, f_nu.measure)
            if config.record_predictor:
                pred_bl[k] = bl_distance(p_mu.measure, p_nu.measure)
        wall[k] = time.perf_counter() - t0

    return StabilityTrace(
        step=np.arange(n), bl=bl, tv=tv, predictor_bl=pred_bl, predictor_tv=pred_tv,
        cos_lower=nan.copy(), wall_time=wall,
        seed=config.seed, method=config.method, x0=float(states[0]),
    )


# ---------------------------------------------------------------------------
# Rate estimation
# ---------------------------------------------------------------------------


def _least_squares(x: np.ndarray, y: np.ndarray):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot / y.size < 1e-18:
        # numerically constant response: the intercept alone fits perfectly
        return float(coef[0]), 1.0
    return float(coef[0]), 1.0 - ss_res / ss_tot


def estimate_rate(values, window: tuple, steps=None) -> RateFit:
    """Classify the decay of a distance trace on ``window = (n_min, n_max)``.

    Fits log d_n against log n (power law) and against n (geometric decay).
    Classification: exponential when the log-linear fit is near-perfect
    (r2 >= 0.98) and beats the log-log fit by >= 0.02; non-decaying when the
    log-log slope is within 0.1 of flat; polynomial otherwise.  Steps with
    d_n <= 0 are excluded and counted in the note.
    """
    values = np.asarray(values, dtype=float)
    steps = np.arange(values.size) if steps is None else np.asarray(steps)
    n_min, n_max = window
    in_window = (steps >= max(n_min, 1)) & (steps <= n_max)
    usable = in_window & np.isfinite(values) & (values > 0.0)
    excluded = int(in_window.sum() - usable.sum())
    if usable.sum() < 5:
        raise ValueError(f"only {int(usable.sum())} usable points in window {window}; need 5")

    n = steps[usable].astype(float)
    d = values[usable]
    slope, r2 = _least_squares(np.log(n), np.log(d))
    lin_slope, lin_r2 = _least_squares(n, np.log(d))

    if lin_r2 >= 0.98 and lin_r2 >= r2 + 0.02:
        classification = "exponential"
    elif abs(slope) < 0.1:
        classification = "non-decaying"
    else:
        classification = "polynomial"

    note = f"{excluded} nonpositive points excluded" if excluded else ""
    return RateFit(slope=slope, r2=r2, classification=classification,
                   window=(int(n_min), int(n_max)), loglin_slope=lin_slope,
                   loglin_r2=lin_r2, n_points=int(usable.sum()), note=note)


def liminf_constant(trace: StabilityTrace, model: StaticGaussianModel,
                    x0: float, tail_fraction: float = 0.5) -> float:
    """min over the trace's tail of n * cos_lower_n.

    For the static Gaussian model this estimates (from below) the constant
    |beta - alpha| / sigma2 * |sin x0| that bounds liminf n * BL_n.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must be in (0, 1]")
    cos_vals = trace.cos_lower
    if not np.any(np.isfinite(cos_vals)):
        raise ValueError("trace has no cos_lower column (not a static-Gaussian run)")
    start = int(np.floor(trace.horizon * (1.0 - tail_fraction)))
    start = max(start, 1)
    tail = np.arange(start, trace.horizon)
    if tail.size == 0:
        raise ValueError("tail window is empty")
    return float(np.min(tail * cos_vals[tail]))


# ---------------------------------------------------------------------------
# Inequality checks
# ---------------------------------------------------------------------------


def _line_lip_constraints(points_sorted: np.ndarray):
    p = points_sorted.size
    if p < 2:
        return None, None
    gaps = np.diff(points_sorted)
    idx = np.arange(p - 1)
    rows = np.repeat(np.arange(2 * (p - 1)), 2)
    cols = np.empty(4 * (p - 1), dtype=int)
    data = np.empty(4 * (p - 1))
    cols[0::4], cols[1::4], cols[2::4], cols[3::4] = idx, idx + 1, idx, idx + 1
    data[0::4], data[1::4], data[2::4], data[3::4] = 1.0, -1.0, -1.0, 1.0
    return sp.csr_matrix((data, (rows, cols)), shape=(2 * (p - 1), p)), np.repeat(gaps, 2)


def check_coupling_bound(rho: DiscreteMeasure, rho_prime: DiscreteMeasure,
                         coupling: np.ndarray, channel: ObservationChannel,
                         y_grid: np.ndarray) -> CouplingCheck:
    """Verify the coupling inequality behind the weak-stability argument.

    lhs: the y-integrated supremum, over test functions f with |f| <= 1 and
    Lipschitz constant <= 1 evaluated at h_inverse of the atoms, of

        | E[f(h^-1(Z)) q(y - Z)] - E[f(h^-1(Z')) q(y - Z')] / E[q(y - Z')]
          * E[q(y - Z)] |

    with Z ~ rho, Z' ~ rho_prime (0/0 = 1 by convention).  rhs, which may
    depend on the supplied coupling of (Z, Z'):

        E[min(d(h^-1(Z), h^-1(Z')), 2)] + 2 integral E|q(y-Z) - q(y-Z')| dy.

    The per-y suprema are solved as one block-diagonal linear program.
    """
    if rho.dim != 1 or rho_prime.dim != 1:
        raise ValueError("coupling check is 1-d")
    coupling = np.asarray(coupling, dtype=float)
    if coupling.shape != (rho.n_atoms, rho_prime.n_atoms):
        raise ValueError("coupling shape must be (len(rho), len(rho_prime)) "
                         "in canonical atom order")
    if np.any(coupling < -1e-12):
        raise ValueError("coupling weights must be nonnegative")
    if (np.max(np.abs(coupling.sum(axis=1) - rho.weights)) > 1e-9
            or np.max(np.abs(coupling.sum(axis=0) - rho_prime.weights)) > 1e-9):
        raise ValueError("coupling marginals do not match the measures")

    y_grid = np.asarray(y_grid, dtype=float)
    dys = np.diff(y_grid)
    if y_grid.size < 2 or np.any(dys <= 0) or np.ptp(dys) > 1e-9 * dys[0]:
        raise ValueError("y_grid must be an increasing uniform grid")
    dy = float(dys[0])

    z = rho.points
    z_p = rho_prime.points
    u = np.concatenate([channel.h_inverse(z), channel.h_inverse(z_p)])
    order = np.argsort(u, kind="stable")
    A0, b0 = _line_lip_constraints(u[order])

    q_rho = channel.noise(y_grid[:, None] - z[None, :]) * rho.weights  # (ny, n)
    q_rp = channel.noise(y_grid[:, None] - z_p[None, :]) * rho_prime.weights
    A_y = q_rho.sum(axis=1)
    B_y = q_rp.sum(axis=1)

    degenerate = B_y <= 1e-300
    ratio = np.zeros_like(B_y)
    np.divide(A_y, B_y, where=~degenerate, out=ratio)
    coef = np.concatenate([q_rho, -ratio[:, None] * q_rp], axis=1)  # (ny, n+m)
    coef[degenerate, rho.n_atoms:] = 0.0
    constant = np.where(degenerate, A_y, 0.0)  # 0/0 = 1: ratio term contributes A_y

    coef_sorted = coef[:, order]
    ny = y_grid.size
    if A0 is None:
        block_total = float(np.abs(coef_sorted).sum())
    else:
        A_full = sp.block_diag([A0] * ny, format="csr")
        res = linprog(-coef_sorted.ravel(), A_ub=A_full, b_ub=np.tile(b0, ny),
                      bounds=(-1.0, 1.0), method="highs",
                      options={"primal_feasibility_tolerance": 1e-10,
                               "dual_feasibility_tolerance": 1e-10})
        if res.status != 0:
            raise RuntimeError(f"coupling LP failed: {res.message}")
        block_total = float(-res.fun)
    lhs = (block_total + float(constant.sum())) * dy

    u_rho = np.asarray(channel.h_inverse(z), dtype=float)
    u_rp = np.asarray(channel.h_inverse(z_p), dtype=float)
    dist_term = float(np.sum(coupling * np.minimum(
        np.abs(u_rho[:, None] - u_rp[None, :]), 2.0)))
    qz = channel.noise(y_grid[:, None] - z[None, :])        # (ny, n)
    qz_p = channel.noise(y_grid[:, None] - z_p[None, :])    # (ny, m)
    abs_diff = np.abs(qz[:, :, None] - qz_p[:, None, :])    # (ny, n, m)
    l1_term = 2.0 * dy * float(np.sum(abs_diff.sum(axis=0) * coupling))
    rhs = dist_term + l1_term

    return CouplingCheck(lhs=lhs, rhs=rhs, passed=bool(lhs <= rhs + 1e-6))


def filter_predictor_tv_check(spec: HMMSpec, prior_mu: Measure, prior_nu: Measure,
                              n: int, n_obs_draws: int, seed: int,
                              grid: GridSpec) -> FilterPredictorCheck:
    """Monte Carlo check of E[tv(filter_mu, filter_nu) | Y_{0:n-1}] <= 2 tv(predictors).

    Freezes the first n observations from a path simulated under prior_mu,
    forms the step-n predictors by grid filtering, then averages the
    filter-pair TV over fresh observation draws from the mu-predictive.
    Passes when the estimate is below the bound plus three standard errors;
    draws degenerate for either filter are excluded and counted.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n_obs_draws < 100:
        raise ValueError("need at least 100 observation draws")

    sim_spec = HMMSpec(spec.kernel, spec.channel, prior_mu,
                       spec.state_dim, spec.obs_dim)
    _, ys = simulate_path(sim_spec, max(n, 1), seed)
    matrix = None if spec.kernel.is_identity else kernel_matrix(spec.kernel, grid)

    def predictor_at_n(prior: Measure) -> FilterState:
        start = FilterState(discretize(prior, grid.origin, grid.spacing, grid.count),
                            0, "predictor")
        if n == 0:
            return start
        pairs = run_grid_filter(spec, ys[:n], prior, grid, matrix=matrix)
        return predict(pairs[-1][1], spec.kernel, matrix=matrix)

    pred_mu = predictor_at_n(prior_mu)
    pred_nu = predictor_at_n(prior_nu)
    rhs = 2.0 * tv_distance(pred_mu.measure, pred_nu.measure)

    predictive = observation_predictive(pred_mu, spec.channel)
    rng = np.random.default_rng([seed, 0x0B5])
    draws = np.asarray(sample_measure(predictive, rng, size=n_obs_draws), dtype=float)

    pts = pred_mu.measure.points
    spacing = pred_mu.measure.spacing
    like = spec.channel.noise(draws[:, None] - spec.channel.h(pts)[None, :])  # (D, G)
    raw_mu = like * pred_mu.measure.values[None, :]
    raw_nu = like * pred_nu.measure.values[None, :]
    mass_mu = raw_mu.sum(axis=1) * spacing
    mass_nu = raw_nu.sum(axis=1) * spacing
    valid = (mass_mu > 1e-300) & (mass_nu > 1e-300)
    excluded = int(n_obs_draws - valid.sum())
    if valid.sum() < 2:
        raise RuntimeError("almost every observation draw was degenerate")

    post_mu = raw_mu[valid] / mass_mu[valid, None]
    post_nu = raw_nu[valid] / mass_nu[valid, None]
    tv_draws = np.abs(post_mu - post_nu).sum(axis=1) * spacing
    lhs = float(tv_draws.mean())
    stderr = float(tv_draws.std(ddof=1) / np.sqrt(tv_draws.size))
    return FilterPredictorCheck(lhs=lhs, rhs=float(rhs),
                                passed=bool(lhs <= rhs + 3.0 * stderr),
                                stderr=stderr, excluded=excluded)
