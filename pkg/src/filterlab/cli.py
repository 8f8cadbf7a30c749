"""Experiment driver: TOML configs, presets, CSV/JSON artifacts, check reports.

Exit codes: 0 success, 1 configuration error, 2 degenerate-update abort.
Identical configs and seeds produce byte-identical CSV artifacts (floats are
written with 12 significant digits and wall-clock fields never reach disk).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .filters import DegenerateUpdateError, GridSpec
from .measures import DensityFn, DiscreteMeasure, GaussianMeasure, Measure
from .models import (
    ARKernel,
    HMMSpec,
    ObservationChannel,
    StaticGaussianModel,
    TransitionKernel,
    assumption_report,
)
from .presets import PRESET_NAMES, get_preset
from .stability import (
    StabilityTrace,
    TwinRunConfig,
    check_coupling_bound,
    estimate_rate,
    filter_predictor_tv_check,
    liminf_constant,
    twin_run,
)

__all__ = ["main", "ConfigError", "ExperimentConfig", "run_experiment",
           "check_assumptions", "write_trace_csv", "read_trace_csv"]

CSV_HEADER = ["step", "bl", "tv", "predictor_bl", "predictor_tv", "cos_lower"]


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""


# ---------------------------------------------------------------------------
# Configuration schema
# ---------------------------------------------------------------------------

_SCHEMA = {
    "preset": None,
    "run": {"horizon", "seeds", "seed", "method", "distances",
            "record_predictor", "n_particles"},
    "model": {"kind", "drift", "dispersion", "noise_std", "obs_map",
              "obs_noise", "obs_noise_scale"},
    "priors": {"mu", "nu", "gamma"},
    "grid": {"origin", "spacing", "count"},
    "output": {"directory"},
}

_PRIOR_KEYS = {"mean", "var", "atoms"}


@dataclass
class ExperimentConfig:
    """A fully resolved experiment description."""

    name: str
    spec: HMMSpec
    prior_mu: Measure
    prior_nu: Measure
    grid: GridSpec
    horizon: int = 100
    seeds: tuple = (0,)
    method: str = "grid"
    distances: tuple = ("bl", "tv")
    record_predictor: bool = False
    n_particles: int = 1000
    observation_prior: Optional[Measure] = None
    static_model: Optional[StaticGaussianModel] = None
    out_dir: Path = field(default_factory=lambda: Path("out"))


def _reject_unknown(table: dict, allowed, where: str):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _parse_prior(entry, where: str) -> Measure:
    if not isinstance(entry, dict):
        raise ConfigError(f"{where} must be a table")
    _reject_unknown(entry, _PRIOR_KEYS, where)
    if "atoms" in entry:
        pairs = entry["atoms"]
        try:
            xs = [float(p[0]) for p in pairs]
            ws = [float(p[1]) for p in pairs]
        except (TypeError, IndexError):
            raise ConfigError(f"{where}.atoms must be a list of [point, weight] pairs")
        return DiscreteMeasure(np.array(xs), np.array(ws))
    if "mean" in entry and "var" in entry:
        return GaussianMeasure(float(entry["mean"]), float(entry["var"]))
    raise ConfigError(f"{where} needs either mean/var or atoms")


_DRIFTS = {
    "random-walk": lambda x: np.asarray(x, dtype=float),
    "contracting": lambda x: 0.5 * np.asarray(x, dtype=float),
    "zero": lambda x: np.zeros_like(np.asarray(x, dtype=float)),
}


def _build_obs_noise(kind: str, scale: float):
    if kind == "gaussian":
        noise = DensityFn.gaussian(scale)
        sampler = lambda rng, size=None: rng.normal(0.0, scale, size=size)
        return noise, sampler
    if kind == "uniform":
        return DensityFn.uniform(scale), None
    if kind == "triangular":
        return DensityFn.triangular(scale), None
    raise ConfigError(f"unknown obs_noise {kind!r}")


def _build_model(table: dict) -> tuple:
    """Return (kernel, channel) from an inline [model] table."""
    kind = table.get("kind")
    if kind not in ("static", "ar"):
        raise ConfigError(f"model.kind must be 'static' or 'ar', got {kind!r}")
    if kind == "static":
        kernel = TransitionKernel.identity()
    else:
        drift_name = table.get("drift", "random-walk")
        if drift_name not in _DRIFTS:
            raise ConfigError(f"unknown model.drift {drift_name!r}")
        disp = float(table.get("dispersion", 1.0))
        noise_std = float(table.get("noise_std", 1.0))
        kernel = ARKernel(
            drift=_DRIFTS[drift_name],
            dispersion=lambda x, d=disp: d * np.ones_like(np.asarray(x, dtype=float)),
            noise=DensityFn.gaussian(noise_std),
            alpha=disp,
            noise_sampler=lambda rng, size=None, s=noise_std: rng.normal(0.0, s, size=size),
            name=drift_name,
        )
    obs_map = table.get("obs_map", "identity")
    noise, sampler = _build_obs_noise(table.get("obs_noise", "gaussian"),
                                      float(table.get("obs_noise_scale", 1.0)))
    ident = lambda x: np.asarray(x, dtype=float)
    if obs_map == "identity":
        channel = ObservationChannel(ident, ident, noise, sampler, name="identity")
    elif obs_map == "blind":
        channel = ObservationChannel(
            lambda x: np.zeros_like(np.asarray(x, dtype=float)), ident,
            noise, sampler, name="blind")
    else:
        raise ConfigError(f"unknown model.obs_map {obs_map!r}")
    return kernel, channel


def load_config(path: Optional[str], overrides: argparse.Namespace) -> ExperimentConfig:
    """Read a TOML config (if any), apply CLI overrides, resolve to an experiment."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"malformed config {path}: {err}")
    _reject_unknown(raw, _SCHEMA.keys(), "config")
    for section, allowed in _SCHEMA.items():
        if allowed is not None and section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"[{section}] must be a table")
            _reject_unknown(raw[section], allowed, f"[{section}]")

    preset_name = getattr(overrides, "preset", None) or raw.get("preset")
    model_table = raw.get("model")
    if preset_name is None and model_table is None:
        raise ConfigError("either a preset or an inline [model] table is required")

    if preset_name is not None:
        if preset_name not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {preset_name!r}; "
                              f"known: {', '.join(PRESET_NAMES)}")
        preset = get_preset(preset_name)
    else:
        preset = None

    if model_table is not None:
        kernel, channel = _build_model(model_table)
        prior_mu = GaussianMeasure(0.0, 1.0)
        prior_nu = GaussianMeasure(1.0, 1.0)
        spec = HMMSpec(kernel, channel, prior_mu)
        grid = GridSpec(-10.0, 0.01, 2001)
        name = f"inline-{model_table.get('kind')}"
        static_model = None
        method = "grid"
    else:
        spec, prior_mu, prior_nu = preset.spec, preset.prior_mu, preset.prior_nu
        grid, name = preset.grid, preset.name
        static_model = preset.static_model
        method = preset.default_method

    priors = raw.get("priors", {})
    if "mu" in priors:
        prior_mu = _parse_prior(priors["mu"], "priors.mu")
    if "nu" in priors:
        prior_nu = _parse_prior(priors["nu"], "priors.nu")
    observation_prior = (_parse_prior(priors["gamma"], "priors.gamma")
                         if "gamma" in priors else None)
    if "mu" in priors or "nu" in priors:
        spec = HMMSpec(spec.kernel, spec.channel, prior_mu,
                       spec.state_dim, spec.obs_dim)
        if static_model is not None:
            static_model = None  # closed forms no longer known to apply
            if method == "kalman-static":
                method = "grid"

    if "grid" in raw:
        g = raw["grid"]
        try:
            grid = GridSpec(float(g["origin"]), float(g["spacing"]), int(g["count"]))
        except KeyError as err:
            raise ConfigError(f"[grid] needs origin, spacing, count (missing {err})")

    run = raw.get("run", {})
    seeds = run.get("seeds")
    if seeds is None and "seed" in run:
        seeds = [run["seed"]]
    if getattr(overrides, "seeds", None):
        seeds = overrides.seeds
    if seeds is None:
        seeds = [0]
    try:
        seeds = tuple(int(s) for s in seeds)
    except (TypeError, ValueError):
        raise ConfigError("seeds must be a list of integers")

    horizon = int(getattr(overrides, "horizon", None) or run.get("horizon", 100))
    method = getattr(overrides, "method", None) or run.get("method", method)
    distances = getattr(overrides, "distances", None) or run.get("distances", ["bl", "tv"])
    if isinstance(distances, str):
        distances = [d.strip() for d in distances.split(",") if d.strip()]
    record_predictor = bool(run.get("record_predictor", False)
                            or getattr(overrides, "record_predictor", False))
    n_particles = int(run.get("n_particles", 1000))
    out_dir = Path(getattr(overrides, "out", None)
                   or raw.get("output", {}).get("directory", "out"))

    try:
        return ExperimentConfig(
            name=name, spec=spec, prior_mu=prior_mu, prior_nu=prior_nu, grid=grid,
            horizon=horizon, seeds=seeds, method=method, distances=tuple(distances),
            record_predictor=record_predictor, n_particles=n_particles,
            observation_prior=observation_prior, static_model=static_model,
            out_dir=out_dir,
        )
    except ValueError as err:
        raise ConfigError(str(err))


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.12g}"


def write_trace_csv(path: Path, trace: StabilityTrace):
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i in range(trace.horizon):
            writer.writerow([
                str(int(trace.step[i])),
                _fmt(trace.bl[i]), _fmt(trace.tv[i]),
                _fmt(trace.predictor_bl[i]), _fmt(trace.predictor_tv[i]),
                _fmt(trace.cos_lower[i]),
            ])


def read_trace_csv(path) -> dict:
    """Parse a trace CSV back into float arrays (empty fields become NaN)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected CSV header {header}")
        rows = list(reader)
    out = {}
    for j, name in enumerate(CSV_HEADER):
        col = [row[j] for row in rows]
        if name == "step":
            out[name] = np.array([int(v) for v in col])
        else:
            out[name] = np.array([float(v) if v else math.nan for v in col])
    return out


def _mean_trace(traces: list, metric: str) -> np.ndarray:
    return np.mean(np.vstack([getattr(t, metric) for t in traces]), axis=0)


def _summarize(config: ExperimentConfig, traces: dict) -> dict:
    ordered = [traces[s] for s in config.seeds]
    summary = {
        "preset": config.name,
        "seeds": list(config.seeds),
        "horizon": config.horizon,
        "method": config.method,
        "distances": list(config.distances),
        "final_bl": _final_mean(ordered, "bl"),
        "final_tv": _final_mean(ordered, "tv"),
        "rate_slope": None,
        "rate_class": None,
        "liminf_estimate": None,
        "checks": {},
    }

    metric = "bl" if "bl" in config.distances else "tv"
    mean_curve = _mean_trace(ordered, metric)
    window = (max(1, config.horizon // 10), config.horizon - 1)
    if np.isfinite(mean_curve).any():
        try:
            fit = estimate_rate(mean_curve, window)
            summary["rate_slope"] = fit.slope
            summary["rate_class"] = fit.classification
            summary["rate_r2"] = fit.r2
            summary["rate_window"] = list(fit.window)
            summary["rate_metric"] = metric
        except ValueError:
            pass

    if config.static_model is not None and config.method == "kalman-static":
        model = config.static_model
        per_seed = {str(t.seed): liminf_constant(t, model, t.x0) for t in ordered}
        summary["liminf_estimate"] = float(np.mean(list(per_seed.values())))
        summary["liminf_by_seed"] = per_seed
        summary["model"] = {
            "alpha": model.alpha, "beta": model.beta, "sigma2": model.sigma2,
            "x0": {str(t.seed): t.x0 for t in ordered},
            "liminf_target": {str(t.seed): model.liminf_target(t.x0) for t in ordered},
        }

    for report in assumption_report(config.spec):
        summary["checks"][report.name] = bool(report.passed)
    summary["inequality_pass_counts"] = _inequality_counts(config)
    return summary


def _inequality_counts(config: ExperimentConfig) -> dict:
    """Quick per-run spot checks of the two filtering inequalities.

    A check that cannot be evaluated (degenerate draws, prior off the grid)
    counts as not passed rather than aborting an otherwise successful run.
    """
    rng = np.random.default_rng(0)
    coupling_pass = 0
    n_coupling = 20
    y_span = 3.0 + 2.0 * config.spec.channel.noise.support_radius
    y_grid = np.linspace(-y_span, y_span, 201)
    for _ in range(n_coupling):
        n, m = rng.integers(1, 4, size=2)
        rho = DiscreteMeasure(rng.uniform(-3, 3, n), rng.dirichlet(np.ones(n)))
        rho_p = DiscreteMeasure(rng.uniform(-3, 3, m), rng.dirichlet(np.ones(m)))
        independent = rho.weights[:, None] * rho_p.weights[None, :]
        try:
            res = check_coupling_bound(rho, rho_p, independent,
                                       config.spec.channel, y_grid)
            coupling_pass += bool(res.passed)
        except (RuntimeError, ValueError):
            pass

    fp_pass, n_fp = 0, 3
    for i in range(n_fp):
        try:
            res = filter_predictor_tv_check(config.spec, config.prior_mu,
                                            config.prior_nu, n=i + 1,
                                            n_obs_draws=300, seed=i,
                                            grid=config.grid)
            fp_pass += bool(res.passed)
        except (RuntimeError, ValueError):
            pass
    return {"coupling": f"{coupling_pass}/{n_coupling}",
            "filter_vs_predictor": f"{fp_pass}/{n_fp}"}


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every seed, write trace CSVs and summary.json, return the summary."""
    config.out_dir.mkdir(parents=True, exist_ok=True)
    traces = {}
    for seed in config.seeds:
        trace = twin_run(TwinRunConfig(
            spec=config.spec, prior_mu=config.prior_mu, prior_nu=config.prior_nu,
            horizon=config.horizon, seed=seed, method=config.method,
            distances=config.distances, record_predictor=config.record_predictor,
            grid=config.grid, n_particles=config.n_particles,
            observation_prior=config.observation_prior,
        ))
        traces[seed] = trace
        write_trace_csv(config.out_dir / f"trace_{seed}.csv", trace)
    summary = _summarize(config, traces)
    with open(config.out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _final_mean(traces: list, metric: str):
    vals = [getattr(t, metric)[-1] for t in traces]
    vals = [v for v in vals if math.isfinite(v)]
    return float(np.mean(vals)) if vals else None


def check_assumptions(config: ExperimentConfig) -> int:
    reports = assumption_report(config.spec)
    for report in reports:
        print(report)
    return 0 if all(r.passed for r in reports) else 2


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _add_common(parser):
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--preset", help=f"model preset ({', '.join(PRESET_NAMES)})")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filterlab",
        description="Twin-filter stability experiments for hidden Markov models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a twin-filter experiment")
    _add_common(run)
    run.add_argument("--horizon", type=int)
    run.add_argument("--seed", type=int, action="append", dest="seeds",
                     help="repeatable; explicit seed list")
    run.add_argument("--seeds", type=lambda s: [int(v) for v in s.split(",")],
                     dest="seeds", help="comma-separated seed list")
    run.add_argument("--method", choices=("grid", "particle", "kalman-static"))
    run.add_argument("--distances", help="comma-separated subset of bl,tv")
    run.add_argument("--record-predictor", action="store_true")
    run.add_argument("--out", help="output directory")

    check = sub.add_parser("check-assumptions", help="run the model assumption checks")
    _add_common(check)

    rate = sub.add_parser("rate", help="fit a decay rate to a trace CSV")
    rate.add_argument("trace", help="trace_<seed>.csv produced by run")
    rate.add_argument("--metric", choices=("bl", "tv"), default=None)
    rate.add_argument("--window", help="n_min:n_max step window for the fit")
    return parser


def _cmd_rate(args) -> int:
    data = read_trace_csv(args.trace)
    metric = args.metric
    if metric is None:
        metric = "bl" if np.isfinite(data["bl"]).any() else "tv"
    horizon = int(data["step"][-1]) + 1
    window = (max(1, horizon // 10), horizon - 1)
    if args.window:
        try:
            lo, hi = args.window.split(":")
            window = (int(lo), int(hi))
        except ValueError:
            raise ConfigError(f"bad --window {args.window!r}; expected n_min:n_max")
    fit = estimate_rate(data[metric], window, steps=data["step"])
    print(f"metric={metric} window={fit.window[0]}:{fit.window[1]} "
          f"slope={fit.slope:.4f} r2={fit.r2:.4f} class={fit.classification}"
          + (f" ({fit.note})" if fit.note else ""))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "rate":
            return _cmd_rate(args)
        config = load_config(args.config, args)
        if args.command == "check-assumptions":
            return check_assumptions(config)
        summary = run_experiment(config)
        print(f"wrote {len(config.seeds)} trace(s) and summary.json to {config.out_dir}")
        if summary["rate_class"] is not None:
            print(f"rate: slope={summary['rate_slope']:.4f} class={summary['rate_class']}")
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except DegenerateUpdateError as err:
        print(f"degenerate update: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
