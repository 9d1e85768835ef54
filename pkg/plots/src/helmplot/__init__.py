"""Figure rendering for helmfem benchmark CSV artifacts."""

__version__ = "0.1.0"

from .render import FigureSpec, RenderError, load_csv, render

__all__ = ["FigureSpec", "RenderError", "load_csv", "render"]
