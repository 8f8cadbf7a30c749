"""Probability measures on the real line and the two distances used throughout.

Conventions:

* Total variation is the sup over test functions bounded by 1, i.e.
  ``tv(a, b) = integral |da - db|`` with range [0, 2].  This is twice the
  probabilists' convention; it keeps the constants in the filtering
  inequalities free of stray factors of 2.
* The dual bounded-Lipschitz distance is the sup over test functions with
  sup-norm <= 1 and Lipschitz constant <= 1, also valued in [0, 2].  On
  discrete supports it is computed exactly as a linear program; continuous
  measures are reduced to discrete ones with :func:`discretize`.
* Distances between measures on R^d use the Euclidean metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.stats import norm

__all__ = [
    "DiscreteMeasure",
    "GridDensity",
    "GaussianMeasure",
    "DensityFn",
    "Measure",
    "tv_distance",
    "bl_distance",
    "discretize",
    "convolve_density",
    "sample_measure",
    "gaussian_tv_same_variance",
    "gaussian_bl_same_variance",
]

WEIGHT_TOL = 1e-12
GRID_MASS_TOL = 1e-9
DENSITY_MASS_TOL = 1e-6
COVERAGE_TOL = 1e-4


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure on R^d.

    Atoms are stored as an (n, d) array in lexicographic order; zero-weight
    atoms are dropped and duplicate atoms merged at construction, so two
    measures are equal iff their canonical forms coincide.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise ValueError("atoms must be a nonempty (n,) or (n, d) array")
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.shape[0] != atoms.shape[0]:
            raise ValueError("weights length must match atom count")
        if not np.all(np.isfinite(atoms)) or not np.all(np.isfinite(weights)):
            raise ValueError("atoms and weights must be finite")
        if np.any(weights < -WEIGHT_TOL):
            raise ValueError("weights must be nonnegative")

        uniq, inverse = np.unique(atoms, axis=0, return_inverse=True)
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inverse.ravel(), np.maximum(weights, 0.0))
        keep = merged > 0.0
        if not np.any(keep):
            raise ValueError("degenerate measure: no positive-weight atoms")
        uniq, merged = uniq[keep], merged[keep]
        total = merged.sum()
        object.__setattr__(self, "atoms", uniq)
        object.__setattr__(self, "weights", merged / total)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def points(self) -> np.ndarray:
        """Atom locations as a flat array (requires d = 1)."""
        if self.dim != 1:
            raise ValueError("points is only defined for 1-d measures")
        return self.atoms[:, 0]

    def mean(self) -> float:
        return float(self.weights @ self.points)

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.points - m) ** 2)


@dataclass(frozen=True)
class GridDensity:
    """Probability density sampled on a uniform 1-d grid.

    ``values[j]`` is the density at ``origin + j * spacing``; construction
    renormalizes so that ``spacing * sum(values) == 1``.
    """

    origin: float
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        if not (self.spacing > 0.0 and np.isfinite(self.spacing)):
            raise ValueError("spacing must be positive and finite")
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("values must be nonempty")
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        if np.any(values < -1e-12):
            raise ValueError("density values must be nonnegative")
        values = np.maximum(values, 0.0)
        total = values.sum() * self.spacing
        if total <= 0.0:
            raise ValueError("density has no mass")
        object.__setattr__(self, "origin", float(self.origin))
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "values", values / total)

    @property
    def count(self) -> int:
        return self.values.size

    @property
    def points(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.count)

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.spacing

    def mass(self) -> float:
        return float(self.values.sum() * self.spacing)

    def mean(self) -> float:
        return float(self.masses @ self.points)

    def variance(self) -> float:
        m = self.mean()
        return float(self.masses @ (self.points - m) ** 2)


@dataclass(frozen=True)
class GaussianMeasure:
    """Scalar Gaussian measure N(mean, variance); variance >= 0 (0 = point mass)."""

    mean: float
    variance: float

    def __post_init__(self):
        if not np.isfinite(self.mean) or not np.isfinite(self.variance):
            raise ValueError("mean and variance must be finite")
        if self.variance < 0.0:
            raise ValueError("variance must be nonnegative")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def density(self, x: np.ndarray) -> np.ndarray:
        if self.variance == 0.0:
            raise ValueError("point mass has no Lebesgue density")
        return norm.pdf(np.asarray(x, dtype=float), self.mean, self.std)


@dataclass(frozen=True)
class DensityFn:
    """Probability density on R with a declared effective support radius.

    ``fn`` must be vectorized over numpy arrays and (numerically) integrate
    to 1 over ``[-support_radius, support_radius]``; this is checked by
    quadrature at construction (tolerance 1e-6).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    name: str = ""
    _check_points: int = field(default=20001, repr=False)

    def __post_init__(self):
        if not (self.support_radius > 0.0 and np.isfinite(self.support_radius)):
            raise ValueError("support_radius must be positive and finite")
        mass = self._quad_moment(0)
        if abs(mass - 1.0) > DENSITY_MASS_TOL:
            raise ValueError(
                f"density {self.name or self.fn!r} integrates to {mass:.8f} "
                f"over +-{self.support_radius}, expected 1 within {DENSITY_MASS_TOL}"
            )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(x, dtype=float))

    def _quad_moment(self, order: int) -> float:
        zs = np.linspace(-self.support_radius, self.support_radius, self._check_points)
        vals = np.asarray(self.fn(zs), dtype=float)
        if np.any(vals < -1e-12) or not np.all(np.isfinite(vals)):
            raise ValueError("density must be finite and nonnegative on its support")
        return float(np.trapezoid(vals * zs**order, zs))

    @cached_property
    def mean(self) -> float:
        return self._quad_moment(1)

    @cached_property
    def std(self) -> float:
        return float(np.sqrt(max(self._quad_moment(2) - self.mean**2, 0.0)))

    @classmethod
    def gaussian(cls, std: float = 1.0, mean: float = 0.0) -> "DensityFn":
        """N(mean, std^2); radius captures all but ~1e-10 of the mass."""
        if std <= 0:
            raise ValueError("std must be positive")

        def pdf(z):
            return norm.pdf(z, mean, std)

        return cls(pdf, support_radius=abs(mean) + 6.5 * std, name=f"gaussian(std={std:g})")

    @classmethod
    def uniform(cls, half_width: float = 1.0) -> "DensityFn":
        if half_width <= 0:
            raise ValueError("half_width must be positive")
        h = float(half_width)

        def pdf(z):
            return np.where(np.abs(z) <= h, 0.5 / h, 0.0)

        return cls(pdf, support_radius=h, name=f"uniform(+-{h:g})")

    @classmethod
    def triangular(cls, half_width: float = 1.0) -> "DensityFn":
        if half_width <= 0:
            raise ValueError("half_width must be positive")
        h = float(half_width)

        def pdf(z):
            return np.maximum(1.0 - np.abs(z) / h, 0.0) / h

        return cls(pdf, support_radius=h, name=f"triangular(+-{h:g})")


Measure = Union[DiscreteMeasure, GridDensity, GaussianMeasure]


# ---------------------------------------------------------------------------
# Closed forms for same-variance Gaussian pairs (vectorized over arrays)
# ---------------------------------------------------------------------------


def gaussian_tv_same_variance(delta, std):
    """tv(N(m, s^2), N(m + delta, s^2)) = 2 (2 Phi(|delta| / 2s) - 1)."""
    delta, std = np.broadcast_arrays(np.abs(np.asarray(delta, dtype=float)),
                                     np.asarray(std, dtype=float))
    ratio = np.full(delta.shape, np.inf)
    np.divide(delta, 2.0 * std, where=std > 0.0, out=ratio)
    ratio[(std == 0.0) & (delta == 0.0)] = 0.0
    out = 2.0 * (2.0 * norm.cdf(ratio) - 1.0)
    return out if out.ndim else float(out)


def gaussian_bl_same_variance(mean_a, mean_b, variance):
    """Exact BL distance between N(mean_a, v) and N(mean_b, v).

    The difference of two equal-variance Gaussian densities is antisymmetric
    about the midpoint m and positive on one side, so the optimal test
    function is x |-> clip(m - x, -1, 1) and the supremum reduces to
    elementary Phi/phi terms.  Cross-checked against the LP route in tests.
    """
    mean_a = np.asarray(mean_a, dtype=float)
    mean_b = np.asarray(mean_b, dtype=float)
    variance = np.asarray(variance, dtype=float)
    a = np.abs(mean_b - mean_a) / 2.0
    s = np.sqrt(variance)

    def half_integral(c, s):
        # int_0^1 2u phi_s(u - c) du + int_1^inf 2 phi_s(u - c) du
        lo, hi = -c, 1.0 - c
        t1 = 2.0 * (
            -(s**2) * (norm.pdf(hi, scale=s) - norm.pdf(lo, scale=s))
            + c * (norm.cdf(hi, scale=s) - norm.cdf(lo, scale=s))
        )
        return t1 + 2.0 * norm.sf(1.0 - c, scale=s)

    with np.errstate(invalid="ignore", divide="ignore"):
        s_safe = np.where(s > 0.0, s, 1.0)
        smooth = half_integral(a, s_safe) - half_integral(-a, s_safe)
    out = np.where(s > 0.0, smooth, np.minimum(2.0 * a, 2.0))
    out = np.where(a == 0.0, 0.0, out)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Total variation
# ---------------------------------------------------------------------------


def tv_distance(a: Measure, b: Measure, *, resample: bool = False) -> float:
    """Total variation distance, range [0, 2]: ``integral |da - db|``.

    Exact for discrete/discrete and for equal-variance Gaussian pairs; a
    Riemann sum on the (shared) grid otherwise.  Gaussian or discrete
    measures paired with a grid are projected onto that grid.  Two grids
    must share spacing and node alignment unless ``resample=True``, in which
    case both are linearly resampled onto a common grid.  A discrete/Gaussian
    pair has no canonical grid; discretize explicitly first.
    """
    if isinstance(a, DiscreteMeasure) and isinstance(b, DiscreteMeasure):
        if a.dim != b.dim:
            raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
        atoms = np.concatenate([a.atoms, b.atoms])
        uniq, inverse = np.unique(atoms, axis=0, return_inverse=True)
        signed = np.zeros(uniq.shape[0])
        np.add.at(signed, inverse[: a.n_atoms].ravel(), a.weights)
        np.add.at(signed, inverse[a.n_atoms :].ravel(), -b.weights)
        return float(np.abs(signed).sum())

    if isinstance(a, GaussianMeasure) and isinstance(b, GaussianMeasure):
        if abs(a.variance - b.variance) <= 1e-12 * max(1.0, a.variance, b.variance):
            return float(gaussian_tv_same_variance(a.mean - b.mean, max(a.std, b.std)))
        return _tv_gaussians_numeric(a, b)

    if isinstance(a, GridDensity) and isinstance(b, GridDensity):
        return _tv_grids(a, b, resample=resample)

    if isinstance(a, GridDensity) and isinstance(b, (GaussianMeasure, DiscreteMeasure)):
        return _tv_grids(a, discretize(b, a.origin, a.spacing, a.count), resample=resample)
    if isinstance(b, GridDensity) and isinstance(a, (GaussianMeasure, DiscreteMeasure)):
        return _tv_grids(discretize(a, b.origin, b.spacing, b.count), b, resample=resample)

    raise TypeError(
        f"no common representation for {type(a).__name__} vs {type(b).__name__}; "
        "discretize onto an explicit grid first"
    )


def _tv_gaussians_numeric(a: GaussianMeasure, b: GaussianMeasure) -> float:
    if a.variance == 0.0 or b.variance == 0.0:
        if a.variance == b.variance:  # both point masses
            return 0.0 if a.mean == b.mean else 2.0
        return 2.0  # point mass vs absolutely continuous
    lo = min(a.mean - 9 * a.std, b.mean - 9 * b.std)
    hi = max(a.mean + 9 * a.std, b.mean + 9 * b.std)
    n = min(int(np.ceil((hi - lo) / (min(a.std, b.std) / 500.0))) + 1, 400001)
    zs = np.linspace(lo, hi, max(n, 4001))
    return float(np.trapezoid(np.abs(a.density(zs) - b.density(zs)), zs))


def _tv_grids(a: GridDensity, b: GridDensity, *, resample: bool) -> float:
    rel = max(a.spacing, b.spacing)
    aligned = abs(a.spacing - b.spacing) <= 1e-12 * rel
    if aligned:
        offset = (b.origin - a.origin) / a.spacing
        aligned = abs(offset - round(offset)) <= 1e-9
    if not aligned:
        if not resample:
            raise ValueError(
                "grids have mismatched spacing or offset; pass resample=True "
                "to compare on a common grid"
            )
        spacing = min(a.spacing, b.spacing)
        lo = min(a.origin, b.origin)
        hi = max(a.points[-1], b.points[-1])
        count = int(np.ceil((hi - lo) / spacing)) + 1
        pts = lo + spacing * np.arange(count)
        va = np.interp(pts, a.points, a.values, left=0.0, right=0.0)
        vb = np.interp(pts, b.points, b.values, left=0.0, right=0.0)
        va /= max(va.sum() * spacing, 1e-300)
        vb /= max(vb.sum() * spacing, 1e-300)
        return float(np.abs(va - vb).sum() * spacing)

    shift = int(round((b.origin - a.origin) / a.spacing))
    lo = min(0, shift)
    hi = max(a.count, shift + b.count)
    va = np.zeros(hi - lo)
    vb = np.zeros(hi - lo)
    va[-lo : -lo + a.count] = a.values
    vb[shift - lo : shift - lo + b.count] = b.values
    return float(np.abs(va - vb).sum() * a.spacing)


# ---------------------------------------------------------------------------
# Dual bounded-Lipschitz distance (LP)
# ---------------------------------------------------------------------------

_HIGHS_TIGHT = {"primal_feasibility_tolerance": 1e-10,
                "dual_feasibility_tolerance": 1e-10}


def bl_distance(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    """Dual bounded-Lipschitz distance between discrete measures, range [0, 2].

    Maximizes ``sum_i f_i (a_i - b_i)`` over test-function values on the
    union of atoms subject to ``|f_i| <= 1`` and ``|f_i - f_j| <= d(x_i, x_j)``.
    On the line the Lipschitz constraints on adjacent sorted atoms imply all
    pairwise ones, so the 1-d fast path only emits those; in higher dimension
    the dense pairwise program is solved (union capped at 2000 atoms).
    """
    if not isinstance(a, DiscreteMeasure) or not isinstance(b, DiscreteMeasure):
        raise TypeError("bl_distance operates on discrete measures")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")

    atoms = np.concatenate([a.atoms, b.atoms])
    uniq, inverse = np.unique(atoms, axis=0, return_inverse=True)
    signed = np.zeros(uniq.shape[0])
    np.add.at(signed, inverse[: a.n_atoms].ravel(), a.weights)
    np.add.at(signed, inverse[a.n_atoms :].ravel(), -b.weights)
    if np.all(np.abs(signed) <= 1e-15):
        return 0.0
    if uniq.shape[0] == 1:
        return 0.0

    if a.dim == 1:
        return _bl_lp_line(uniq[:, 0], signed)
    return _bl_lp_dense(uniq, signed)


def _bl_lp_line(xs: np.ndarray, signed: np.ndarray) -> float:
    # np.unique already sorted xs ascending; adjacent constraints suffice on R
    n = xs.size
    gaps = np.diff(xs)
    idx = np.arange(n - 1)
    rows = np.repeat(np.arange(2 * (n - 1)), 2)
    cols = np.empty(4 * (n - 1), dtype=int)
    data = np.empty(4 * (n - 1))
    cols[0::4], cols[1::4], cols[2::4], cols[3::4] = idx, idx + 1, idx, idx + 1
    data[0::4], data[1::4], data[2::4], data[3::4] = 1.0, -1.0, -1.0, 1.0
    A = sp.csr_matrix((data, (rows, cols)), shape=(2 * (n - 1), n))
    res = linprog(-signed, A_ub=A, b_ub=np.repeat(gaps, 2), bounds=(-1.0, 1.0),
                  method="highs", options=_HIGHS_TIGHT)
    if res.status != 0:
        raise RuntimeError(f"BL linear program failed: {res.message}")
    return float(max(-res.fun, 0.0))


def _bl_lp_dense(atoms: np.ndarray, signed: np.ndarray) -> float:
    n = atoms.shape[0]
    if n > 2000:
        raise ValueError(f"union of {n} atoms exceeds the dense-LP limit of 2000")
    ii, jj = np.triu_indices(n, k=1)
    dists = np.linalg.norm(atoms[ii] - atoms[jj], axis=1)
    m = ii.size
    rows = np.repeat(np.arange(2 * m), 2)
    cols = np.empty(4 * m, dtype=int)
    data = np.empty(4 * m)
    cols[0::4], cols[1::4], cols[2::4], cols[3::4] = ii, jj, ii, jj
    data[0::4], data[1::4], data[2::4], data[3::4] = 1.0, -1.0, -1.0, 1.0
    A = sp.csr_matrix((data, (rows, cols)), shape=(2 * m, n))
    res = linprog(-signed, A_ub=A, b_ub=np.repeat(dists, 2), bounds=(-1.0, 1.0),
                  method="highs", options=_HIGHS_TIGHT)
    if res.status != 0:
        raise RuntimeError(f"BL linear program failed: {res.message}")
    return float(max(-res.fun, 0.0))


# ---------------------------------------------------------------------------
# Discretization and convolution
# ---------------------------------------------------------------------------


def discretize(m: Measure, origin: float, spacing: float, count: int) -> GridDensity:
    """Project a measure onto the uniform grid ``origin + spacing * [0..count)``.

    Gaussians are sampled at the nodes and renormalized; discrete atoms are
    assigned to their nearest node (mass preserving, unbiased at nodes); an
    existing grid is linearly resampled.  Raises when the grid misses more
    than 1e-4 of the mass or is too coarse to resolve it.
    """
    if spacing <= 0 or count < 1:
        raise ValueError("spacing must be positive and count >= 1")
    points = origin + spacing * np.arange(count)

    if isinstance(m, GaussianMeasure):
        if m.variance == 0.0:
            return discretize(DiscreteMeasure(np.array([m.mean]), np.array([1.0])),
                              origin, spacing, count)
        raw = m.density(points)
        raw_mass = raw.sum() * spacing
        if abs(raw_mass - 1.0) > COVERAGE_TOL:
            raise ValueError(
                f"grid captures mass {raw_mass:.6f}; too coarse or too short "
                f"for N({m.mean:g}, {m.variance:g})"
            )
        return GridDensity(origin, spacing, raw)

    if isinstance(m, DiscreteMeasure):
        if m.dim != 1:
            raise ValueError("grids are 1-d; cannot discretize a measure on R^d, d > 1")
        xs = m.points
        idx = np.rint((xs - origin) / spacing).astype(int)
        off_grid = (idx < 0) | (idx >= count)
        misplaced = np.abs(xs - (origin + idx * spacing)) > spacing / 2 + 1e-12
        if np.any(off_grid | misplaced):
            raise ValueError("grid does not cover all atoms within half a cell")
        values = np.zeros(count)
        np.add.at(values, idx, m.weights / spacing)
        return GridDensity(origin, spacing, values)

    if isinstance(m, GridDensity):
        inside = (m.points >= points[0] - spacing / 2) & (m.points <= points[-1] + spacing / 2)
        covered = float(m.masses[inside].sum())
        if covered < 1.0 - COVERAGE_TOL:
            raise ValueError(f"target grid captures mass {covered:.6f} of the source grid")
        values = np.interp(points, m.points, m.values, left=0.0, right=0.0)
        return GridDensity(origin, spacing, values)

    raise TypeError(f"cannot discretize {type(m).__name__}")


def convolve_density(g: GridDensity, q: DensityFn) -> GridDensity:
    """Convolve a grid density with a noise density, extending the grid.

    The noise is sampled at grid spacing out to its declared support radius
    and renormalized (the declared radius already captures all but <= 1e-6
    of the mass, which construction of :class:`DensityFn` guarantees); the
    output grid extends the input by that radius on both sides.
    """
    spacing = g.spacing
    k = int(np.ceil(q.support_radius / spacing))
    offsets = spacing * np.arange(-k, k + 1)
    q_samples = np.asarray(q(offsets), dtype=float)
    sampled_mass = q_samples.sum() * spacing
    if not sampled_mass > 0.0 or abs(sampled_mass - 1.0) > 0.05:
        raise ValueError(
            f"noise sampled at spacing {spacing:g} carries mass {sampled_mass:.4f}; "
            "grid too coarse for this noise density"
        )
    q_samples = q_samples / (q_samples.sum() * spacing)
    out_values = np.convolve(g.values, q_samples) * spacing
    return GridDensity(g.origin - k * spacing, spacing, out_values)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_measure(m: Measure, rng: np.random.Generator, size: int | None = None):
    """Draw samples from a measure (grid measures sample their nodes by mass)."""
    if isinstance(m, GaussianMeasure):
        return rng.normal(m.mean, m.std, size=size)
    if isinstance(m, DiscreteMeasure):
        idx = rng.choice(m.n_atoms, size=size, p=m.weights)
        picked = m.atoms[idx]
        return picked[..., 0] if m.dim == 1 else picked
    if isinstance(m, GridDensity):
        idx = rng.choice(m.count, size=size, p=m.masses / m.masses.sum())
        return m.origin + m.spacing * idx
    raise TypeError(f"cannot sample from {type(m).__name__}")
