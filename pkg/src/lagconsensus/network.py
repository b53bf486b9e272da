"""Constant communication delays: grid quantization, history rings, views.

Delays are constant per edge and must sit on the integrator grid, so a
delayed query is always an exact stored sample and never an interpolation.
Queries reaching before the start of a run return the initial sample
(constant pre-history).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import NeighborView

__all__ = ["DelayMatrix", "HistoryBuffer", "delayed_xi", "neighbor_view"]

GRID_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DelayMatrix:
    """Per-edge constant delays in seconds, quantized to the step grid."""

    seconds: np.ndarray
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        sec = np.array(self.seconds, dtype=float)
        if sec.ndim != 2 or sec.shape[0] != sec.shape[1]:
            raise ValueError("delay matrix must be square")
        if (sec < 0).any():
            raise ValueError("delays must be nonnegative")
        steps = np.round(sec / self.step)
        off = np.abs(sec - steps * self.step)
        if (off > GRID_TOL).any():
            i, j = np.unravel_index(int(np.argmax(off)), off.shape)
            raise ValueError(
                f"delay[{i}][{j}] = {sec[i, j]} is not a multiple of step {self.step}"
            )
        sec.setflags(write=False)
        steps = steps.astype(int)
        steps.setflags(write=False)
        object.__setattr__(self, "seconds", sec)
        object.__setattr__(self, "steps", steps)

    @property
    def n(self) -> int:
        return self.seconds.shape[0]

    @property
    def max_delay(self) -> float:
        return float(self.steps.max() * self.step)

    @classmethod
    def uniform(cls, n, delay, step):
        """Every edge shares one delay (diagonal included; it is never read)."""
        return cls(np.full((n, n), float(delay)), step)

    @classmethod
    def none(cls, n, step):
        return cls(np.zeros((n, n)), step)


class HistoryBuffer:
    """Ring of xi samples on the macro-step grid; single writer, many readers.

    Sample k corresponds to time k * step.  The ring keeps just enough
    history for the largest delay; sample 0 is kept aside so pre-history
    queries stay valid after the ring wraps.
    """

    def __init__(self, xi0, step, max_delay_steps):
        xi0 = np.array(xi0, dtype=float)
        if xi0.ndim != 2:
            raise ValueError("xi0 must be an (agents, dof) array")
        self.step = float(step)
        self.n, self.m = xi0.shape
        self._capacity = int(max_delay_steps) + 1
        self._ring = np.empty((self._capacity, self.n, self.m))
        self._ring[0] = xi0
        self._first = xi0.copy()
        self._latest = 0

    @property
    def latest_step(self) -> int:
        return self._latest

    def record(self, xi_all):
        """Commit the next grid sample for all agents."""
        self._latest += 1
        self._ring[self._latest % self._capacity] = xi_all

    def sample(self, agent, step_index):
        """Stored xi of one agent at grid sample `step_index` (clamped below 0)."""
        if step_index <= 0:
            return self._first[agent].copy()
        if step_index > self._latest or step_index <= self._latest - self._capacity:
            raise IndexError(
                f"sample {step_index} outside the retained window "
                f"({self._latest - self._capacity + 1}..{self._latest})"
            )
        return self._ring[step_index % self._capacity, agent].copy()


def delayed_xi(buffer: HistoryBuffer, agent, t, delay):
    """xi_agent(t - delay) as an exact grid sample; delay 0 reads the current one.

    Precondition: t and delay sit on the buffer's grid (rounding here only
    absorbs float dust, not genuine misalignment; configs validate that).
    """
    return buffer.sample(agent, round((t - delay) / buffer.step))


def neighbor_view(schedule, buffer, delays: DelayMatrix, agent, t) -> NeighborView:
    """Effective in-neighbor snapshot of one agent at time t.

    Weights come from the scheduled graph at t; each neighbor's xi is read
    back through that edge's own delay.
    """
    weights_row = schedule.graph_at(t).weights[agent]
    ids = np.flatnonzero(weights_row)
    if ids.size:
        xi_rows = np.array(
            [delayed_xi(buffer, j, t, delays.seconds[agent, j]) for j in ids]
        )
    else:
        xi_rows = np.zeros((0, buffer.m))
    return NeighborView(tuple(int(j) for j in ids), weights_row[ids].copy(), xi_rows)
