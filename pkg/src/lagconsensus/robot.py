"""Two-link planar arm dynamics in the classical three-parameter form.

The arm moves in a horizontal plane, so gravity drops out and the joint
dynamics M(q) qdd + C(q, qdot) qdot = tau are fully described by three
composite inertial parameters theta = (t1, t2, t3).  Everything below is
linear in theta, which the regressor makes explicit: that linearity is
what the adaptive controller exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NOMINAL_THETA",
    "RobotModel",
    "DynamicsTerms",
    "two_link_arm",
    "dynamics_terms",
    "regressor",
    "forward_accel",
]

# Two unit-mass links of length 0.5 m, centers of mass at midspan,
# rod inertia m l^2 / 12 about each center:
#   t1 = I1 + m1 lc1^2 + I2 + m2 (l1^2 + lc2^2)
#   t2 = I2 + m2 lc2^2
#   t3 = m2 l1 lc2
NOMINAL_THETA = np.array([5.0 / 12.0, 1.0 / 12.0, 0.125])

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class RobotModel:
    """A dof-joint arm described by param_count composite parameters."""

    theta: np.ndarray
    dof: int = 2
    param_count: int = 3

    def __post_init__(self):
        if self.dof != 2 or self.param_count != 3:
            raise ValueError("only the planar two-link, three-parameter arm is implemented")
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (self.param_count,):
            raise ValueError(f"theta must have shape ({self.param_count},)")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)


def two_link_arm(theta=None) -> RobotModel:
    """Reference arm; `theta` defaults to the nominal parameters."""
    return RobotModel(NOMINAL_THETA if theta is None else theta)


@dataclass(frozen=True)
class DynamicsTerms:
    inertia: np.ndarray
    coriolis: np.ndarray
    gravity: np.ndarray


def dynamics_terms(model: RobotModel, q, qdot) -> DynamicsTerms:
    """Inertia, Coriolis and gravity terms at the configuration (q, qdot).

    The inertia matrix is symmetric positive definite for physical theta,
    and d/dt M - 2 C is skew-symmetric with this Coriolis factorization.
    """
    t1, t2, t3 = model.theta
    c2 = math.cos(q[1])
    s2 = math.sin(q[1])
    inertia = np.array(
        [
            [t1 + 2.0 * t3 * c2, t2 + t3 * c2],
            [t2 + t3 * c2, t2],
        ]
    )
    coriolis = np.array(
        [
            [-t3 * s2 * qdot[1], -t3 * s2 * (qdot[0] + qdot[1])],
            [t3 * s2 * qdot[0], 0.0],
        ]
    )
    return DynamicsTerms(inertia, coriolis, np.zeros(2))


def regressor(model: RobotModel, q, qdot, zeta, zeta_dot) -> np.ndarray:
    """Matrix Y with Y @ theta == M(q) zeta_dot + C(q, qdot) zeta + g for all theta.

    (zeta, zeta_dot) is an arbitrary reference pair; the controller feeds
    its internal state and that state's rate through here.
    """
    c2 = math.cos(q[1])
    s2 = math.sin(q[1])
    row1 = [
        zeta_dot[0],
        zeta_dot[1],
        c2 * (2.0 * zeta_dot[0] + zeta_dot[1])
        - s2 * (qdot[1] * zeta[0] + (qdot[0] + qdot[1]) * zeta[1]),
    ]
    row2 = [
        0.0,
        zeta_dot[0] + zeta_dot[1],
        c2 * zeta_dot[0] + s2 * qdot[0] * zeta[0],
    ]
    return np.array([row1, row2])


def forward_accel(model: RobotModel, q, qdot, tau) -> np.ndarray:
    """Joint accelerations under torque tau.

    Refuses to invert a numerically degenerate inertia matrix, which only
    happens for unphysical parameter values.
    """
    terms = dynamics_terms(model, q, qdot)
    if np.linalg.cond(terms.inertia) > COND_LIMIT:
        raise ValueError("inertia matrix numerically singular; check model parameters")
    rhs = np.asarray(tau, dtype=float) - terms.coriolis @ np.asarray(qdot, dtype=float)
    rhs = rhs - terms.gravity
    return np.linalg.solve(terms.inertia, rhs)
