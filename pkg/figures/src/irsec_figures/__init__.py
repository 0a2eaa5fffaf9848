"""Figure rendering for irsec experiment result tables."""

from .render import PlotSpec, RenderError, aggregate, read_rows, render

__all__ = ["PlotSpec", "RenderError", "aggregate", "read_rows", "render"]
