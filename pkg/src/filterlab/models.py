"""Hidden-Markov-model building blocks and executable assumption checkers.

A model couples a signal transition kernel with an additive observation
channel ``Y_k = h(X_k) + xi_k``.  The checkers here turn the structural
assumptions behind filter stability (invertible observation map, noise
whose Fourier transform vanishes nowhere, kernels that are uniformly
TV-continuous in the starting point) into finite numerical diagnostics.
They are heuristics on bounded windows, not proofs, and their reports say
which window was used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .measures import DensityFn, Measure, sample_measure

__all__ = [
    "TransitionKernel",
    "ARKernel",
    "ObservationChannel",
    "HMMSpec",
    "StaticGaussianModel",
    "CheckReport",
    "inverse_cdf_sampler",
    "simulate_path",
    "ar_kernel_tv",
    "kernel_tv_modulus",
    "char_fn_min",
    "assumption_report",
]

KERNEL_MASS_TOL = 1e-6


def inverse_cdf_sampler(density: DensityFn, table_size: int = 65537) -> Callable:
    """Build a deterministic sampler for a 1-d density via an inverse-CDF table."""
    zs = np.linspace(-density.support_radius, density.support_radius, table_size)
    pdf = np.asarray(density(zs), dtype=float)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2.0 * np.diff(zs))])
    cdf /= cdf[-1]

    def sampler(rng: np.random.Generator, size=None):
        return np.interp(rng.uniform(size=size), cdf, zs)

    return sampler


@dataclass
class TransitionKernel:
    """Signal transition law P(x, .), given as a sampler and optionally a density.

    ``sampler(x, rng)`` maps a state (or an array of states) to next states.
    ``density(x, z)`` when present must broadcast over numpy arrays and, for
    each fixed x, integrate to 1 over ``density_center(x) +- density_radius``
    (checked at construction on a few probe states).  ``is_identity`` marks
    deterministic "stay put" dynamics, which every filter representation can
    propagate exactly without a Lebesgue density.
    """

    sampler: Callable
    density: Optional[Callable] = None
    name: str = ""
    is_identity: bool = False
    density_center: Optional[Callable] = None
    density_radius: Optional[float] = None
    check_states: tuple = (-2.0, 0.0, 2.0)

    def __post_init__(self):
        if self.density is not None:
            if self.density_radius is None:
                raise ValueError("density kernels must declare density_radius")
            center = self.density_center or (lambda x: x)
            for x in self.check_states:
                c = float(center(x))
                zs = np.linspace(c - self.density_radius, c + self.density_radius, 8001)
                mass = float(np.trapezoid(self.density(x, zs), zs))
                if abs(mass - 1.0) > KERNEL_MASS_TOL:
                    raise ValueError(
                        f"kernel density from x={x:g} integrates to {mass:.8f} "
                        f"on its declared support"
                    )

    @property
    def has_density(self) -> bool:
        return self.density is not None

    @staticmethod
    def identity(name: str = "static") -> "TransitionKernel":
        """Deterministic static signal: X_{k+1} = X_k."""
        return TransitionKernel(sampler=lambda x, rng: x, name=name, is_identity=True)


class ARKernel(TransitionKernel):
    """Autoregressive scalar kernel X_{k+1} = b(X_k) + sigma(X_k) eta_k.

    ``drift`` and ``dispersion`` must be vectorized over arrays, and the
    dispersion uniformly bounded below by ``alpha > 0`` (spot-checked on the
    probe states).  The implied transition density is
    ``p(x, z) = q_eta((z - b(x)) / sigma(x)) / sigma(x)``.
    """

    def __init__(
        self,
        drift: Callable,
        dispersion: Callable,
        noise: DensityFn,
        alpha: float,
        noise_sampler: Optional[Callable] = None,
        name: str = "ar",
        check_states: tuple = (-5.0, -2.0, 0.0, 2.0, 5.0),
    ):
        if alpha <= 0:
            raise ValueError("dispersion lower bound alpha must be positive")
        self.drift = drift
        self.dispersion = dispersion
        self.noise = noise
        self.alpha = float(alpha)
        self.noise_sampler = noise_sampler or inverse_cdf_sampler(noise)

        probes = np.asarray(check_states, dtype=float)
        disp = np.asarray(dispersion(probes), dtype=float)
        if np.any(disp < alpha - 1e-12):
            raise ValueError(
                f"dispersion drops to {disp.min():g} below declared bound {alpha:g}"
            )

        def sampler(x, rng):
            x = np.asarray(x, dtype=float)
            eta = self.noise_sampler(rng, size=x.shape if x.shape else None)
            return drift(x) + dispersion(x) * eta

        def density(x, z):
            s = dispersion(x)
            return noise((np.asarray(z, dtype=float) - drift(x)) / s) / s

        max_disp = float(np.max(disp))
        super().__init__(
            sampler=sampler,
            density=density,
            name=name,
            is_identity=False,
            density_center=lambda x: float(drift(np.asarray(x, dtype=float))),
            density_radius=(max_disp * noise.support_radius) * 1.05 + 1e-9,
            check_states=check_states,
        )


@dataclass
class ObservationChannel:
    """Additive observation channel Y = h(X) + xi.

    ``h`` and ``h_inverse`` must be vectorized; a conforming channel satisfies
    ``h_inverse(h(x)) == x``, which :func:`assumption_report` verifies (the
    deliberately broken presets violate it, so it is not enforced here).
    ``noise_sampler(rng, size)`` defaults to inverse-CDF sampling of ``noise``.
    """

    h: Callable
    h_inverse: Callable
    noise: DensityFn
    noise_sampler: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.noise_sampler is None:
            self.noise_sampler = inverse_cdf_sampler(self.noise)

    def likelihood(self, y: float, x: np.ndarray) -> np.ndarray:
        """q_xi(y - h(x)) as a function of the state."""
        return self.noise(y - self.h(np.asarray(x, dtype=float)))


@dataclass
class HMMSpec:
    """A signal kernel, an observation channel, and a prior for X_0."""

    kernel: TransitionKernel
    channel: ObservationChannel
    prior: Measure
    state_dim: int = 1
    obs_dim: int = 1

    def __post_init__(self):
        if self.state_dim < 1 or self.obs_dim < 1:
            raise ValueError("dimensions must be positive")


@dataclass(frozen=True)
class StaticGaussianModel:
    """Static signal X_k = X_0 with Gaussian priors N(alpha, s2) / N(beta, s2).

    The closed-form filter for this model (unit Gaussian observation noise,
    h = id) is the quantitative rate example; sigma2 = 0 is allowed only for
    the degenerate point-mass check.
    """

    alpha: float
    beta: float
    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")

    def liminf_target(self, x0: float) -> float:
        """|beta - alpha| / sigma2 * |sin x0|, the asymptotic lower-rate constant."""
        if self.sigma2 == 0:
            raise ValueError("rate constant undefined for a point-mass prior")
        return abs(self.beta - self.alpha) / self.sigma2 * abs(np.sin(x0))


@dataclass
class CheckReport:
    """Outcome of one assumption diagnostic, with its numeric evidence."""

    name: str
    passed: bool
    evidence: dict
    notes: str = ""

    def __str__(self):
        flag = "PASS" if self.passed else "FAIL"
        ev = ", ".join(f"{k}={_fmt(v)}" for k, v in self.evidence.items())
        tail = f" ({self.notes})" if self.notes else ""
        return f"[{flag}] {self.name}: {ev}{tail}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, np.ndarray):
        return np.array2string(v, precision=4, separator=",")
    return str(v)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def simulate_path(spec: HMMSpec, horizon: int, seed: int):
    """Simulate (X_0..X_{h-1}, Y_0..Y_{h-1}) with Y_k = h(X_k) + xi_k.

    Fully deterministic given the seed: the prior draw, then the transition
    draws in step order, then the observation noise in one batch.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    x = sample_measure(spec.prior, rng)
    states = np.empty(horizon)
    states[0] = x
    for k in range(1, horizon):
        x = spec.kernel.sampler(x, rng)
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"kernel sampler produced a non-finite state at step {k}")
        states[k] = x
    noise = spec.channel.noise_sampler(rng, size=horizon)
    observations = spec.channel.h(states) + noise
    if not np.all(np.isfinite(observations)):
        raise RuntimeError("observation map produced non-finite values")
    return states, observations


# ---------------------------------------------------------------------------
# Kernel TV continuity
# ---------------------------------------------------------------------------


def ar_kernel_tv(kernel: ARKernel, x: float, x_prime: float,
                 target_spacing: float = 5e-4) -> float:
    """tv(P(x, .), P(x', .)) for an AR kernel via change of variables.

    Integrates ``| q((s' z - b + b') / s) * s'/s - q(z) | dz`` on a grid
    covering the supports of both terms, which equals the total variation
    between the two transition laws up to quadrature error.
    """
    if not isinstance(kernel, ARKernel):
        raise TypeError("ar_kernel_tv requires an ARKernel")
    if x == x_prime:
        return 0.0
    q, rad = kernel.noise, kernel.noise.support_radius
    s, s_p = float(kernel.dispersion(x)), float(kernel.dispersion(x_prime))
    shift = float(kernel.drift(x_prime)) - float(kernel.drift(x))
    # support of the transformed term in z
    lo1 = (-rad * s - shift) / s_p
    hi1 = (rad * s - shift) / s_p
    lo = min(-rad, lo1, hi1) - 2 * target_spacing
    hi = max(rad, lo1, hi1) + 2 * target_spacing
    n = max(4001, int(np.ceil((hi - lo) / target_spacing)) + 1)
    zs = np.linspace(lo, hi, n)
    transformed = q((s_p * zs + shift) / s) * (s_p / s)
    direct = q(zs)
    mass_t = float(np.trapezoid(transformed, zs))
    mass_d = float(np.trapezoid(direct, zs))
    if abs(mass_t - 1.0) > 1e-4 or abs(mass_d - 1.0) > 1e-4:
        raise RuntimeError(
            f"quadrature mass check failed ({mass_t:.6f}, {mass_d:.6f}); "
            "grid does not resolve the noise density"
        )
    return float(np.trapezoid(np.abs(transformed - direct), zs))


def kernel_tv_modulus(kernel: ARKernel, deltas, probes: int = 8, seed: int = 0,
                      box: tuple = (-10.0, 10.0)) -> np.ndarray:
    """Empirical modulus curve: max over probe pairs at distance delta of the
    kernel TV.  A lower estimate of the true sup; probe states are drawn
    uniformly from ``box`` (reported alongside by the assumption checker)."""
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas < 0):
        raise ValueError("deltas must be nonnegative")
    if np.any(np.diff(deltas) < 0):
        raise ValueError("deltas must be sorted ascending")
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(box[0], box[1], size=probes)
    signs = rng.choice([-1.0, 1.0], size=probes)
    curve = np.zeros(deltas.size)
    for i, d in enumerate(deltas):
        if d == 0.0:
            continue
        curve[i] = max(ar_kernel_tv(kernel, x, x + sgn * d)
                       for x, sgn in zip(xs, signs))
    return curve


# ---------------------------------------------------------------------------
# Fourier (characteristic-function) check
# ---------------------------------------------------------------------------


def _charfn_abs(q: DensityFn, ts: np.ndarray, z_points: int) -> np.ndarray:
    zs = np.linspace(-q.support_radius, q.support_radius, z_points)
    qz = np.asarray(q(zs), dtype=float)
    qz = qz * np.gradient(zs)
    return np.abs(np.exp(1j * np.outer(ts, zs)) @ qz)


def char_fn_min(q: DensityFn, freq_max: float, freq_count: int = 801,
                tolerance: float = 1e-6, z_points: int = 4001,
                refine_rounds: int = 8) -> CheckReport:
    """Minimum of |phi(t)| over [-freq_max, freq_max] by quadrature.

    The coarse frequency grid is refined locally around its argmin so that a
    genuine zero of the characteristic function inside the window is resolved
    well below ``tolerance`` even when no grid node lands on it.  This is a
    finite-window heuristic: a pass certifies nothing outside the window.
    """
    if freq_max <= 0 or freq_count < 3:
        raise ValueError("freq_max must be positive and freq_count >= 3")
    ts = np.linspace(-freq_max, freq_max, freq_count)
    vals = _charfn_abs(q, ts, z_points)
    k = int(np.argmin(vals))
    t_best, v_best = float(ts[k]), float(vals[k])
    spacing = ts[1] - ts[0]
    for _ in range(refine_rounds):
        local = np.linspace(max(t_best - spacing, -freq_max),
                            min(t_best + spacing, freq_max), 41)
        lv = _charfn_abs(q, local, z_points)
        j = int(np.argmin(lv))
        if lv[j] < v_best:
            v_best, t_best = float(lv[j]), float(local[j])
        spacing = local[1] - local[0]
    passed = v_best > tolerance
    return CheckReport(
        name="fourier-nonvanishing",
        passed=passed,
        evidence={"min_abs_charfn": v_best, "argmin_freq": t_best,
                  "freq_max": float(freq_max), "tolerance": tolerance},
        notes=f"finite window [-{freq_max:g}, {freq_max:g}], not a proof",
    )


# ---------------------------------------------------------------------------
# Aggregated assumption report
# ---------------------------------------------------------------------------


def assumption_report(spec: HMMSpec, *, seed: int = 0, probe_box: tuple = (-10.0, 10.0),
                      n_probes: int = 64, freq_max: Optional[float] = None,
                      modulus_deltas=(1e-3, 1e-2, 1e-1, 1.0)) -> list:
    """Run every applicable assumption diagnostic and collect the reports.

    Checks, in order: the h-inverse round trip on probe states, an empirical
    uniform-continuity modulus for h_inverse, the Fourier zero-freeness of
    the observation noise (window defaulting to 4 / noise std), and, for AR
    kernels, the kernel TV-continuity modulus.  Failures are reported, never
    raised.
    """
    rng = np.random.default_rng(seed)
    ch = spec.channel
    reports = []

    # 1. h_inverse(h(x)) = x
    xs = rng.uniform(probe_box[0], probe_box[1], size=n_probes)
    try:
        err = float(np.max(np.abs(ch.h_inverse(ch.h(xs)) - xs)))
        reports.append(CheckReport(
            name="observation-inverse-roundtrip",
            passed=err < 1e-9,
            evidence={"max_roundtrip_error": err, "n_probes": n_probes},
        ))
    except Exception as err:  # failures are reported, never raised
        reports.append(CheckReport("observation-inverse-roundtrip", False,
                                   {"error": str(err)}, notes="check aborted"))

    # 2. uniform continuity of h_inverse (empirical modulus at shrinking gaps)
    gaps = np.array([1.0, 0.1, 0.01, 1e-3, 1e-4])
    try:
        ys = ch.h(xs) + ch.noise_sampler(rng, size=n_probes)
        modulus = np.array([
            float(np.max(np.abs(ch.h_inverse(ys + g) - ch.h_inverse(ys)))) for g in gaps
        ])
        reports.append(CheckReport(
            name="inverse-uniform-continuity",
            passed=bool(modulus[-1] < 1e-2),
            evidence={"gaps": gaps, "modulus": modulus},
            notes="empirical modulus on sampled observation pairs",
        ))
    except Exception as err:
        reports.append(CheckReport("inverse-uniform-continuity", False,
                                   {"error": str(err)}, notes="check aborted"))

    # 3. Fourier transform of the observation noise vanishes nowhere
    window = freq_max if freq_max is not None else 4.0 / max(ch.noise.std, 1e-6)
    try:
        reports.append(char_fn_min(ch.noise, freq_max=window))
    except Exception as err:  # failures are reported, never raised
        reports.append(CheckReport("fourier-nonvanishing", False,
                                   {"error": str(err)}, notes="check aborted"))

    # 4. kernel TV modulus (AR kernels only; needs a transition density)
    if isinstance(spec.kernel, ARKernel):
        deltas = np.asarray(modulus_deltas, dtype=float)
        try:
            curve = kernel_tv_modulus(spec.kernel, deltas, probes=8, seed=seed,
                                      box=probe_box)
            nondecreasing = bool(np.all(np.diff(curve) >= -1e-3))
            reports.append(CheckReport(
                name="kernel-tv-modulus",
                passed=bool(curve[0] < 0.05) and nondecreasing,
                evidence={"deltas": deltas, "modulus": curve, "probe_box": probe_box},
                notes="empirical lower estimate of the TV modulus",
            ))
        except Exception as err:
            reports.append(CheckReport("kernel-tv-modulus", False,
                                       {"error": str(err)}, notes="check aborted"))

    return reports
