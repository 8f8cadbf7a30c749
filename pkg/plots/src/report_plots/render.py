"""Figure builders: distance-decay curves and the liminf rate plot.

Figures are written as vector graphics (SVG by default, PDF by extension)
with embedded timestamps suppressed, so identical inputs regenerate
byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "report-plots"

import matplotlib.pyplot as plt
import numpy as np

from .frames import MissingColumnError, TraceFrame, load_traces

SEED_STYLE = dict(color="steelblue", alpha=0.35, linewidth=0.9)
MEAN_STYLE = dict(color="crimson", linewidth=1.8, label="mean over seeds")
TARGET_STYLE = dict(color="black", linestyle="--", linewidth=1.2)


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    if out_path.suffix.lower() not in (".svg", ".pdf"):
        raise ValueError(f"vector output expected (.svg or .pdf), got {out_path.suffix!r}")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format=out_path.suffix[1:].lower(),
                metadata=_stable_metadata(out_path.suffix.lower()))
    plt.close(fig)
    return out_path


def _stable_metadata(suffix: str) -> dict:
    if suffix == ".svg":
        return {"Date": None}
    return {"CreationDate": None}


def build_decay_figure(frames: list, metric: Optional[str] = None,
                       scale: str = "linear"):
    """Overlay per-seed decay curves with their mean; log-log mode annotates
    the fitted slope from the run summary when one is available."""
    if scale not in ("linear", "loglog"):
        raise ValueError(f"scale must be 'linear' or 'loglog', got {scale!r}")
    if metric is None:
        metric = "bl" if frames[0].has_metric("bl") else "tv"

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    curves = []
    for frame in frames:
        values = frame.metric(metric)
        label = f"seed {frame.seed}" if frame.seed else frame.path.stem
        ax.plot(frame.step, values, label=None if len(frames) > 4 else label,
                **SEED_STYLE)
        curves.append(values)

    min_len = min(c.size for c in curves)
    mean_curve = np.nanmean(np.vstack([c[:min_len] for c in curves]), axis=0)
    ax.plot(frames[0].step[:min_len], mean_curve, **MEAN_STYLE)

    if scale == "loglog":
        ax.set_xscale("log")
        ax.set_yscale("log")
        slope = frames[0].metadata.get("rate_slope")
        if slope is not None and frames[0].metadata.get("rate_metric", metric) == metric:
            ax.annotate(f"fitted slope {slope:.3f}",
                        xy=(0.05, 0.08), xycoords="axes fraction", fontsize=9)

    ax.set_xlabel("step n")
    ax.set_ylabel(f"{metric.upper()} distance between twin filters")
    ax.legend(loc="upper right", fontsize=8, frameon=False)
    fig.tight_layout()
    return fig


def render_decay(trace_paths, out_path, scale: str = "linear",
                 metric: Optional[str] = None) -> Path:
    frames = load_traces(trace_paths)
    fig = build_decay_figure(frames, metric=metric, scale=scale)
    return _save(fig, out_path)


def _liminf_target(frame: TraceFrame, alpha, beta, sigma2, x0):
    meta_model = frame.metadata.get("model", {})
    if alpha is None:
        alpha = meta_model.get("alpha")
    if beta is None:
        beta = meta_model.get("beta")
    if sigma2 is None:
        sigma2 = meta_model.get("sigma2")
    if x0 is None:
        x0_by_seed = meta_model.get("x0", {})
        x0 = x0_by_seed.get(frame.seed) if frame.seed else None
    if None in (alpha, beta, sigma2, x0):
        raise ValueError(
            f"{frame.path}: model parameters (alpha, beta, sigma2, x0) not found "
            "in summary.json; pass them explicitly")
    return abs(beta - alpha) / sigma2 * abs(math.sin(x0)), x0


def build_liminf_figure(frames: list, alpha=None, beta=None, sigma2=None, x0=None):
    """One panel per trace: n * cos_lower_n against its asymptotic constant."""
    fig, axes = plt.subplots(1, len(frames), figsize=(6.4 * len(frames), 4.2),
                             squeeze=False)
    for ax, frame in zip(axes[0], frames):
        cos_lower = frame.metric("cos_lower")
        target, x0_used = _liminf_target(frame, alpha, beta, sigma2, x0)
        ax.plot(frame.step, frame.step * cos_lower, color="steelblue",
                linewidth=0.9, label="n * cosine lower bound")
        ax.axhline(target, **TARGET_STYLE,
                   label=f"|beta-alpha|/sigma^2 |sin x0| = {target:.4f}")
        ax.set_xlabel("step n")
        ax.set_ylabel("n * lower bound on BL distance")
        title = f"seed {frame.seed}, x0 = {x0_used:.4f}" if frame.seed else frame.path.stem
        ax.set_title(title, fontsize=10)
        ax.legend(loc="lower right", fontsize=8, frameon=False)
    fig.tight_layout()
    return fig


def render_liminf(trace_paths, out_path, alpha=None, beta=None,
                  sigma2=None, x0=None) -> Path:
    if isinstance(trace_paths, (str, Path)):
        trace_paths = [trace_paths]
    frames = load_traces(trace_paths)
    for frame in frames:
        if not frame.has_metric("cos_lower"):
            raise MissingColumnError(f"{frame.path}: cos_lower column is empty; "
                                     "liminf plots need a static-Gaussian run")
    fig = build_liminf_figure(frames, alpha=alpha, beta=beta, sigma2=sigma2, x0=x0)
    return _save(fig, out_path)
