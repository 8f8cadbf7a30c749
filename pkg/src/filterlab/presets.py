"""Named model presets for experiments and the command line."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .filters import GridSpec
from .measures import DensityFn, GaussianMeasure, Measure
from .models import ARKernel, HMMSpec, ObservationChannel, StaticGaussianModel, TransitionKernel

__all__ = ["Preset", "get_preset", "PRESET_NAMES"]


@dataclass
class Preset:
    name: str
    spec: HMMSpec
    prior_mu: Measure
    prior_nu: Measure
    grid: GridSpec
    static_model: Optional[StaticGaussianModel] = None
    default_method: str = "grid"
    description: str = ""


def _gaussian_noise_sampler(std: float):
    return lambda rng, size=None: rng.normal(0.0, std, size=size)


def _identity_channel(obs_noise: DensityFn, sampler=None) -> ObservationChannel:
    ident = lambda x: np.asarray(x, dtype=float)
    return ObservationChannel(h=ident, h_inverse=ident, noise=obs_noise,
                              noise_sampler=sampler, name="identity")


def _blind_channel(obs_noise: DensityFn, sampler=None) -> ObservationChannel:
    # h == 0 discards the state; the (necessarily bogus) inverse is identity
    return ObservationChannel(
        h=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        h_inverse=lambda y: np.asarray(y, dtype=float),
        noise=obs_noise,
        noise_sampler=sampler,
        name="blind",
    )


def _static_gaussian(alpha=0.0, beta=1.0, sigma2=1.0, obs_noise_std=1.0) -> Preset:
    noise = DensityFn.gaussian(obs_noise_std)
    spec = HMMSpec(
        kernel=TransitionKernel.identity(),
        channel=_identity_channel(noise, _gaussian_noise_sampler(obs_noise_std)),
        prior=GaussianMeasure(alpha, sigma2),
    )
    return Preset(
        name="static-gaussian",
        spec=spec,
        prior_mu=GaussianMeasure(alpha, sigma2),
        prior_nu=GaussianMeasure(beta, sigma2),
        grid=GridSpec(-10.0, 0.005, 4001),
        static_model=StaticGaussianModel(alpha, beta, sigma2),
        default_method="kalman-static",
        description="static signal X_k = X_0 observed in unit Gaussian noise; "
                    "closed-form filter, O(1/n) forgetting rate",
    )


def _ar_random_walk(obs_noise_std=1.0, mu_mean=-2.0, nu_mean=2.0,
                    prior_var=1.0) -> Preset:
    kernel = ARKernel(
        drift=lambda x: np.asarray(x, dtype=float),
        dispersion=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        noise=DensityFn.gaussian(1.0),
        alpha=1.0,
        noise_sampler=_gaussian_noise_sampler(1.0),
        name="random-walk",
    )
    noise = DensityFn.gaussian(obs_noise_std)
    spec = HMMSpec(kernel=kernel,
                   channel=_identity_channel(noise, _gaussian_noise_sampler(obs_noise_std)),
                   prior=GaussianMeasure(mu_mean, prior_var))
    return Preset(
        name="ar-random-walk",
        spec=spec,
        prior_mu=GaussianMeasure(mu_mean, prior_var),
        prior_nu=GaussianMeasure(nu_mean, prior_var),
        grid=GridSpec(-60.0, 0.05, 2401),
        description="random-walk signal with identity observations; the low "
                    "signal-to-noise regime uses obs_noise_std=5",
    )


def _ar_contracting(obs_noise_std=1.0, mu_mean=-2.0, nu_mean=2.0,
                    prior_var=1.0) -> Preset:
    kernel = ARKernel(
        drift=lambda x: 0.5 * np.asarray(x, dtype=float),
        dispersion=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        noise=DensityFn.gaussian(1.0),
        alpha=1.0,
        noise_sampler=_gaussian_noise_sampler(1.0),
        name="contracting",
    )
    noise = DensityFn.gaussian(obs_noise_std)
    spec = HMMSpec(kernel=kernel,
                   channel=_identity_channel(noise, _gaussian_noise_sampler(obs_noise_std)),
                   prior=GaussianMeasure(mu_mean, prior_var))
    return Preset(
        name="ar-contracting",
        spec=spec,
        prior_mu=GaussianMeasure(mu_mean, prior_var),
        prior_nu=GaussianMeasure(nu_mean, prior_var),
        grid=GridSpec(-15.0, 0.01, 3001),
        description="mean-reverting AR(1) signal, x -> x/2 + noise",
    )


def _counterexample_blind(mu_mean=0.0, nu_mean=1.0, prior_var=1.0) -> Preset:
    noise = DensityFn.gaussian(1.0)
    spec = HMMSpec(
        kernel=TransitionKernel.identity(),
        channel=_blind_channel(noise, _gaussian_noise_sampler(1.0)),
        prior=GaussianMeasure(mu_mean, prior_var),
    )
    return Preset(
        name="counterexample-blind",
        spec=spec,
        prior_mu=GaussianMeasure(mu_mean, prior_var),
        prior_nu=GaussianMeasure(nu_mean, prior_var),
        grid=GridSpec(-10.0, 0.01, 2001),
        description="h == 0: observations carry no state information and the "
                    "static filter never forgets its prior",
    )


_FACTORIES = {
    "static-gaussian": _static_gaussian,
    "ar-random-walk": _ar_random_walk,
    "ar-contracting": _ar_contracting,
    "counterexample-blind": _counterexample_blind,
}

PRESET_NAMES = tuple(sorted(_FACTORIES))


def get_preset(name: str, **params) -> Preset:
    """Look up a preset by name; keyword parameters override its defaults."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}") from None
    return factory(**params)
