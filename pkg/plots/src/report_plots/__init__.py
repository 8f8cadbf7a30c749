"""Publication-style figures from filterlab trace CSV/JSON artifacts."""

from .frames import MissingColumnError, TraceFormatError, TraceFrame, load_trace, load_traces
from .render import build_decay_figure, build_liminf_figure, render_decay, render_liminf

__version__ = "0.1.0"
