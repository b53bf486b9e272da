"""Shared fixed-step integration core."""

from __future__ import annotations

__all__ = ["rk4_step", "grid_count", "is_grid_aligned"]

GRID_TOL = 1e-9


def rk4_step(f, t, y, h):
    """One classical fourth-order step of y' = f(t, y)."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def grid_count(duration, step):
    """Number of whole macro-steps covering `duration`, which must sit on the grid."""
    count = round(duration / step)
    if count < 1 or abs(count * step - duration) > GRID_TOL:
        raise ValueError(f"duration {duration} is not a positive multiple of step {step}")
    return int(count)


def is_grid_aligned(value, step, tol=GRID_TOL):
    """Whether `value` is an integer multiple of `step` within `tol`."""
    return abs(value - round(value / step) * step) <= tol
