"""Parse simulator CSV tables and draw them.

The only contract with the simulator is its documented CSV layout: a
header row, a leading `t` column, and an optional `agent` column that
tags each row with a 1-based agent id. When `agent` is present every
channel splits into one curve per agent; otherwise a channel is a
single curve over time.

Rendering never touches pyplot. Figures are built through the object
API so parallel jobs cannot share hidden state, and SVG output is byte
stable: ids are salted with a fixed string and the creation date is
dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from .figspec import FigureSpec, MissingChannel, SpecError

__all__ = ["Table", "build_figure", "load_table", "render"]

HASH_SALT = "lagplots"
LEGEND_LIMIT = 12
PNG_DPI = 150


@dataclass(frozen=True)
class Table:
    """One parsed CSV: named numeric columns over a shared time axis."""

    path: Path
    header: tuple[str, ...]
    rows: np.ndarray

    def column(self, name: str) -> np.ndarray:
        if name not in self.header:
            raise MissingChannel(name, self.path, self.header)
        return self.rows[:, self.header.index(name)]

    @property
    def agent_ids(self) -> tuple[int, ...]:
        if "agent" not in self.header:
            return ()
        return tuple(int(i) for i in np.unique(self.column("agent")))


def load_table(path) -> Table:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip()
        body = fh.read()
    if not header:
        raise SpecError(str(path), "missing CSV header row")
    names = tuple(header.split(","))

    data = []
    for lineno, line in enumerate(body.splitlines(), start=2):
        cells = line.split(",")
        if len(cells) != len(names):
            raise SpecError(f"{path}:{lineno}", "row width does not match the header")
        try:
            data.append([float(cell) for cell in cells])
        except ValueError as exc:
            raise SpecError(f"{path}:{lineno}", f"not numeric ({exc})") from exc
    rows = np.array(data) if data else np.zeros((0, len(names)))
    return Table(path, names, rows)


def _curve_name(prefix, channel, agent, many_channels):
    parts = [prefix] if prefix else []
    if many_channels or agent is None:
        parts.append(channel)
    if agent is not None:
        parts.append(f"agent {agent}")
    return " ".join(parts)


def build_figure(spec: FigureSpec, tables) -> Figure:
    """Assemble the figure in memory; `render` handles files."""
    fig = Figure(figsize=(8.0, 4.5))
    ax = fig.subplots()
    many_inputs = len(tables) > 1
    many_channels = len(spec.channels) > 1
    for table, label in zip(tables, spec.labels):
        t = table.column("t")
        if t.size == 0:
            continue
        prefix = label if many_inputs else ""
        for channel in spec.channels:
            y = table.column(channel)
            ids = table.agent_ids
            if not ids:
                ax.plot(t, y, linewidth=1.2, label=_curve_name(prefix, channel, None, many_channels))
                continue
            agents = table.column("agent").astype(int)
            for i in ids:
                pick = agents == i
                ax.plot(
                    t[pick],
                    y[pick],
                    linewidth=1.2,
                    label=_curve_name(prefix, channel, i, many_channels),
                )

    if spec.title:
        ax.set_title(spec.title)
    ax.set_xlabel(spec.xlabel)
    if spec.ylabel:
        ax.set_ylabel(spec.ylabel)
    ax.grid(True, alpha=0.3)
    if 0 < len(ax.lines) <= LEGEND_LIMIT:
        ax.legend(fontsize="small")
    return fig


def render(spec: FigureSpec) -> Path:
    """Write the figure described by `spec` and return the image path.

    All channels are checked against every input header before anything
    is drawn, so a bad spec never leaves a stale image behind.
    """
    tables = [load_table(p) for p in spec.inputs]
    for table in tables:
        table.column("t")
        for channel in spec.channels:
            table.column(channel)

    fig = build_figure(spec, tables)
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with mpl.rc_context({"svg.hashsalt": HASH_SALT}):
        if out.suffix.lower() == ".svg":
            fig.savefig(out, format="svg", metadata={"Date": None})
        else:
            fig.savefig(out, format="png", dpi=PNG_DPI)
    return out
