"""Figure rendering for thinddp harness CSV outputs."""

__version__ = "0.1.0"

from .render import KINDS, PlotSpec, SchemaError, build_figure, render
