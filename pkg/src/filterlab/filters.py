"""Filtering recursions: predictor step, Bayes update, and end-to-end drivers.

Time convention: the filter at step 0 is the law of X_0 given Y_0, so a run
starts by treating the prior as the step-0 predictor and updating it with
the first observation; predict then maps the step-n filter to the step-n+1
predictor.  Every predict/update renormalizes and asserts unit mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measures import (
    DiscreteMeasure,
    GaussianMeasure,
    GridDensity,
    Measure,
    convolve_density,
    discretize,
    sample_measure,
)
from .models import HMMSpec, ObservationChannel, StaticGaussianModel, TransitionKernel

__all__ = [
    "GridSpec",
    "FilterState",
    "KalmanStaticState",
    "DegenerateUpdateError",
    "predict",
    "update",
    "observation_predictive",
    "kernel_matrix",
    "run_grid_filter",
    "run_particle_filter",
    "trace_records",
    "kalman_static",
]

LIKELIHOOD_FLOOR = 1e-300
MASS_ATOL = 1e-9


class DegenerateUpdateError(RuntimeError):
    """Raised when an observation carries (numerically) zero likelihood mass."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid configuration for grid-based filters."""

    origin: float
    spacing: float
    count: int

    def __post_init__(self):
        if self.spacing <= 0 or self.count < 2:
            raise ValueError("grid needs positive spacing and at least 2 nodes")

    @property
    def points(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.count)

    @property
    def upper(self) -> float:
        return self.origin + self.spacing * (self.count - 1)


@dataclass(frozen=True)
class FilterState:
    """A conditional law at a given step, tagged filter or predictor."""

    measure: Measure
    step: int
    kind: str  # "filter" or "predictor"

    def __post_init__(self):
        if self.kind not in ("filter", "predictor"):
            raise ValueError(f"kind must be 'filter' or 'predictor', got {self.kind!r}")
        if self.step < 0:
            raise ValueError("step must be nonnegative")
        _assert_normalized(self.measure)


@dataclass(frozen=True)
class KalmanStaticState:
    """Closed-form posterior N(mean, variance) for the static Gaussian model."""

    mean: float
    variance: float
    step: int


def _assert_normalized(measure: Measure):
    if isinstance(measure, GridDensity):
        assert abs(measure.mass() - 1.0) <= MASS_ATOL, "grid mass drifted from 1"
    elif isinstance(measure, DiscreteMeasure):
        assert abs(measure.weights.sum() - 1.0) <= MASS_ATOL, "weights drifted from 1"


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------


def kernel_matrix(kernel: TransitionKernel, grid: GridSpec) -> np.ndarray:
    """Dense transition matrix K[i, j] = p(x_i, x_j) on the grid nodes.

    O(count^2) memory; built once per run and reused every predict step.
    """
    if not kernel.has_density:
        raise ValueError("kernel has no density; cannot build a grid transition matrix")
    pts = grid.points
    return np.asarray(kernel.density(pts[:, None], pts[None, :]), dtype=float)


def predict(state: FilterState, kernel: TransitionKernel,
            rng: Optional[np.random.Generator] = None,
            matrix: Optional[np.ndarray] = None) -> FilterState:
    """Propagate a filter through the signal kernel to the next predictor.

    Grid states use dense kernel-density quadrature (``matrix`` may carry the
    precomputed node-to-node densities); particle clouds propagate every atom
    through the sampler, which requires ``rng``.  Identity kernels pass any
    representation through unchanged.
    """
    if state.kind != "filter":
        raise ValueError("predict expects a filter state (priors enter as predictors)")
    m = state.measure

    if kernel.is_identity:
        return FilterState(m, state.step + 1, "predictor")

    if isinstance(m, GridDensity):
        if matrix is None:
            matrix = kernel_matrix(
                kernel, GridSpec(m.origin, m.spacing, m.count))
        new_values = m.spacing * (m.values @ matrix)
        out = GridDensity(m.origin, m.spacing, new_values)
        return FilterState(out, state.step + 1, "predictor")

    if isinstance(m, DiscreteMeasure):
        if rng is None:
            raise ValueError("particle predict needs an explicit rng")
        moved = kernel.sampler(m.points, rng)
        out = DiscreteMeasure(moved, m.weights)
        return FilterState(out, state.step + 1, "predictor")

    raise TypeError(f"predict does not support {type(m).__name__} states")


def update(state: FilterState, y: float, channel: ObservationChannel) -> FilterState:
    """Bayes update: reweight the predictor by q_xi(y - h(x)) and renormalize.

    Scaling the likelihood by any c > 0 cancels in the normalization.  A total
    likelihood mass below 1e-300 raises :class:`DegenerateUpdateError` naming
    the observation (distinguishing measure-zero observations from underflow).
    """
    if state.kind != "predictor":
        raise ValueError("update expects a predictor state")
    m = state.measure

    if isinstance(m, GridDensity):
        like = channel.likelihood(y, m.points)
        new_values = m.values * like
        total = new_values.sum() * m.spacing
        if not total > LIKELIHOOD_FLOOR:
            raise DegenerateUpdateError(
                f"observation y={y:g} has zero likelihood mass under the predictor")
        return FilterState(GridDensity(m.origin, m.spacing, new_values),
                           state.step, "filter")

    if isinstance(m, DiscreteMeasure):
        like = channel.likelihood(y, m.points)
        new_weights = m.weights * like
        if not new_weights.sum() > LIKELIHOOD_FLOOR:
            raise DegenerateUpdateError(
                f"observation y={y:g} has zero likelihood mass under the predictor")
        return FilterState(DiscreteMeasure(m.atoms, new_weights), state.step, "filter")

    raise TypeError(f"update does not support {type(m).__name__} states; "
                    "use kalman_static for closed-form Gaussian updates")


def observation_predictive(state: FilterState, channel: ObservationChannel,
                           spacing: Optional[float] = None) -> GridDensity:
    """Predictive law of the next observation: pushforward through h, then
    convolution with the observation noise density."""
    if state.kind != "predictor":
        raise ValueError("the observation predictive is defined for predictor states")
    m = state.measure
    if isinstance(m, GridDensity):
        step = spacing or m.spacing
        mapped = np.asarray(channel.h(m.points), dtype=float)
        masses = m.masses
    elif isinstance(m, DiscreteMeasure):
        step = spacing or 0.01
        mapped = np.asarray(channel.h(m.points), dtype=float)
        masses = m.weights
    else:
        raise TypeError(f"unsupported predictor representation {type(m).__name__}")

    lo, hi = float(mapped.min()), float(mapped.max())
    origin = lo - step
    count = int(np.ceil((hi - origin) / step)) + 2
    pushed = DiscreteMeasure(_snap(mapped, origin, step), masses)
    grid = discretize(pushed, origin, step, count)
    return convolve_density(grid, channel.noise)


def _snap(points: np.ndarray, origin: float, spacing: float) -> np.ndarray:
    return origin + spacing * np.rint((points - origin) / spacing)


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


def run_grid_filter(spec: HMMSpec, observations, prior: Measure, grid: GridSpec,
                    matrix: Optional[np.ndarray] = None):
    """Grid filter over an observation sequence.

    Returns one (predictor, filter) pair per observation; the step-0
    predictor is the discretized prior.  A degenerate update aborts with the
    step index attached.
    """
    observations = np.asarray(observations, dtype=float)
    if observations.size == 0:
        return []
    if not spec.kernel.is_identity:
        if not spec.kernel.has_density:
            raise ValueError("grid filtering needs a kernel density "
                             "(or identity dynamics)")
        if matrix is None:
            matrix = kernel_matrix(spec.kernel, grid)

    pred = FilterState(discretize(prior, grid.origin, grid.spacing, grid.count),
                       0, "predictor")
    out = []
    for k, y in enumerate(observations):
        if k > 0:
            pred = predict(filt, spec.kernel, matrix=matrix)
        try:
            filt = update(pred, float(y), spec.channel)
        except DegenerateUpdateError as err:
            raise DegenerateUpdateError(f"step {k}: {err}") from None
        out.append((pred, filt))
    return out


def _systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = weights.size
    positions = (np.arange(n) + rng.uniform()) / n
    return np.minimum(np.searchsorted(np.cumsum(weights), positions), n - 1)


def run_particle_filter(spec: HMMSpec, observations, prior: Measure,
                        n_particles: int, seed: int):
    """Bootstrap particle filter: propagate, reweight, systematic resample.

    Resampling happens every step with a single uniform draw, so two runs
    with the same seed consume identical random streams (common random
    numbers for twin experiments).  Returns (predictor, filter) pairs of
    canonicalized particle clouds; raw clouds are kept internally so merged
    duplicates never distort the dynamics.
    """
    if n_particles < 2:
        raise ValueError("need at least 2 particles")
    observations = np.asarray(observations, dtype=float)
    if observations.size == 0:
        return []
    rng = np.random.default_rng(seed)
    atoms = np.asarray(sample_measure(prior, rng, size=n_particles), dtype=float)
    weights = np.full(n_particles, 1.0 / n_particles)

    out = []
    for k, y in enumerate(observations):
        if k > 0:
            atoms = np.asarray(spec.kernel.sampler(atoms, rng), dtype=float)
        pred = DiscreteMeasure(atoms, weights)
        like = spec.channel.likelihood(float(y), atoms)
        w = weights * like
        total = w.sum()
        if not total > LIKELIHOOD_FLOOR:
            raise DegenerateUpdateError(
                f"step {k}: observation y={y:g} wiped out every particle weight")
        w = w / total
        ess = 1.0 / float(w @ w)
        if ess < 2.0:
            raise DegenerateUpdateError(
                f"step {k}: effective sample size {ess:.2f} < 2 (weight collapse)")
        out.append((FilterState(pred, k, "predictor"),
                    FilterState(DiscreteMeasure(atoms, w), k, "filter")))
        idx = _systematic_resample(w, rng)
        atoms = atoms[idx]
        weights = np.full(n_particles, 1.0 / n_particles)
    return out


def trace_records(pairs) -> list:
    """Serialize a filter run as one record per state.

    Each (predictor, filter) pair from a driver becomes two dicts with keys
    ``step``, ``kind``, ``mean``, ``variance``, ``mass_check`` (total mass
    minus one, up to representation tolerance).
    """
    records = []
    for pair in pairs:
        for state in pair:
            m = state.measure
            if isinstance(m, GaussianMeasure):
                mean, var, mass = m.mean, m.variance, 1.0
            else:
                mean, var = m.mean(), m.variance()
                mass = m.mass() if isinstance(m, GridDensity) else float(m.weights.sum())
            records.append({"step": state.step, "kind": state.kind,
                            "mean": mean, "variance": var,
                            "mass_check": mass - 1.0})
    return records


def kalman_static(model: StaticGaussianModel, prior_mean: float, observations):
    """Closed-form filter trace for the static signal observed in unit
    Gaussian noise, started from N(prior_mean, model.sigma2):

        mean_k = prior_mean / (1 + s2 (k+1)) + [s2 (k+1) / (1 + s2 (k+1))] ybar_k
        var_k  = s2 / (1 + s2 (k+1))

    with ybar_k the running observation average.  Exact up to roundoff;
    sigma2 = 0 collapses to the point mass at prior_mean.
    """
    observations = np.asarray(observations, dtype=float)
    if observations.size == 0:
        raise ValueError("observations must be nonempty")
    if not np.all(np.isfinite(observations)):
        raise ValueError("observations must be finite")
    s2 = model.sigma2
    k = np.arange(observations.size)
    gain = s2 * (k + 1) / (1.0 + s2 * (k + 1))
    running_mean = np.cumsum(observations) / (k + 1)
    means = prior_mean / (1.0 + s2 * (k + 1)) + gain * running_mean
    variances = s2 / (1.0 + s2 * (k + 1))
    return [KalmanStaticState(float(m), float(v), int(i))
            for i, (m, v) in enumerate(zip(means, variances))]
