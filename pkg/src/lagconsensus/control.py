"""Dynamic-feedback adaptive controller primitives.

Each agent keeps an internal vector z driven by the network coupling, a
sliding error s = qdot - z, a certainty-equivalent torque built from the
arm regressor, and a gradient parameter estimator.  Because z is a proper
state, switching the topology only changes z's *rate*: no derivative of a
discontinuous weight ever enters the torque.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import robot

__all__ = [
    "ControllerGains",
    "ControllerState",
    "NeighborView",
    "xi",
    "zdot",
    "sliding_s",
    "control_torque",
    "param_update_rate",
]

SYMMETRY_TOL = 1e-12


def _check_spd(name, mat):
    mat = np.array(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if np.abs(mat - mat.T).max() > SYMMETRY_TOL:
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(mat).min() <= 0:
        raise ValueError(f"{name} must be positive definite")
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True, eq=False)
class ControllerGains:
    """Feedback gain k (m x m), coupling constant alpha, adaptation gain gamma (p x p)."""

    k: np.ndarray
    alpha: float
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "k", _check_spd("k", self.k))
        object.__setattr__(self, "gamma", _check_spd("gamma", self.gamma))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @classmethod
    def diagonal(cls, k=30.0, alpha=3.0, gamma=6.0, dof=2, param_count=3):
        """Scalar gains expanded to identity multiples, the common case."""
        return cls(k * np.eye(dof), float(alpha), gamma * np.eye(param_count))


@dataclass
class ControllerState:
    """Per-agent controller memory; z stays continuous across topology switches."""

    z: np.ndarray
    theta_hat: np.ndarray


@dataclass(frozen=True, eq=False)
class NeighborView:
    """Snapshot of one agent's in-neighbors: ids, weights, effective xi rows.

    The caller decides what "effective" means; current samples, delayed
    samples, or a mix per edge all flow through the same coupling formula.
    """

    neighbors: tuple
    weights: np.ndarray
    xi_values: np.ndarray

    def __post_init__(self):
        weights = np.atleast_1d(np.array(self.weights, dtype=float))
        xi_values = np.array(self.xi_values, dtype=float)
        if xi_values.ndim != 2 or xi_values.shape[0] != weights.shape[0]:
            raise ValueError("xi_values must have one row per neighbor")
        if len(self.neighbors) != weights.shape[0]:
            raise ValueError("neighbors and weights must have equal length")
        weights.setflags(write=False)
        xi_values.setflags(write=False)
        object.__setattr__(self, "neighbors", tuple(int(j) for j in self.neighbors))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "xi_values", xi_values)

    @classmethod
    def empty(cls, dof=2):
        return cls((), np.zeros(0), np.zeros((0, dof)))


def xi(q, qdot, alpha):
    """Composite signal qdot + alpha q; agreement in xi forces agreement in q."""
    return np.asarray(qdot, dtype=float) + alpha * np.asarray(q, dtype=float)


def zdot(q, qdot, alpha, view: NeighborView):
    """Rate of the controller state z.

    -alpha qdot minus the weighted xi disagreement with the viewed
    neighbors.  The same formula serves instantaneous, delayed and
    switching coupling; the view selects which xi values participate.
    """
    own = xi(q, qdot, alpha)
    rate = -alpha * np.asarray(qdot, dtype=float)
    if view.weights.size:
        rate = rate - view.weights @ (own[None, :] - view.xi_values)
    return rate


def sliding_s(qdot, z):
    """Sliding error s = qdot - z."""
    return np.asarray(qdot, dtype=float) - np.asarray(z, dtype=float)


def control_torque(model, q, qdot, z, z_rate, theta_hat, k):
    """Torque -k s + Y(q, qdot, z, zdot) theta_hat."""
    s = sliding_s(qdot, z)
    y = robot.regressor(model, q, qdot, z, z_rate)
    return -(np.asarray(k) @ s) + y @ np.asarray(theta_hat, dtype=float)


def param_update_rate(y, s, gamma):
    """Gradient adaptation rate -gamma Y^T s."""
    return -(np.asarray(gamma) @ (np.asarray(y).T @ np.asarray(s, dtype=float)))
