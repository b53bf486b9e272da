"""Offline figure generation for the consensus simulator's CSV outputs."""

from .figspec import FigureSpec, MissingChannel, SpecError, load_specs
from .render import Table, build_figure, load_table, render

__all__ = [
    "FigureSpec",
    "MissingChannel",
    "SpecError",
    "Table",
    "build_figure",
    "load_specs",
    "load_table",
    "render",
]
