"""Arm dynamics: parameter linearity, energy structure, inversion."""

import numpy as np
import pytest

from lagconsensus.robot import (
    NOMINAL_THETA,
    RobotModel,
    dynamics_terms,
    forward_accel,
    regressor,
    two_link_arm,
)


def random_samples(count, seed=0):
    rng = np.random.default_rng(seed)
    return (
        rng.uniform(-np.pi, np.pi, (count, 2)),
        rng.uniform(-5.0, 5.0, (count, 2)),
        rng.uniform(-5.0, 5.0, (count, 2)),
        rng.uniform(-5.0, 5.0, (count, 2)),
    )


def test_model_validation():
    with pytest.raises(ValueError):
        RobotModel(np.ones(4))
    with pytest.raises(ValueError):
        RobotModel(np.ones(3), dof=3)
    assert two_link_arm().theta is NOMINAL_THETA or np.array_equal(
        two_link_arm().theta, NOMINAL_THETA
    )


def test_inertia_at_right_angle():
    # cos(q2) = 0 wipes the coupling term.
    terms = dynamics_terms(two_link_arm(), np.array([0.3, np.pi / 2]), np.zeros(2))
    expected = np.array([[5.0 / 12.0, 1.0 / 12.0], [1.0 / 12.0, 1.0 / 12.0]])
    assert np.abs(terms.inertia - expected).max() <= 1e-15
    assert np.array_equal(terms.gravity, np.zeros(2))


def test_inertia_symmetric_positive_definite():
    rng = np.random.default_rng(1)
    for _ in range(200):
        q = rng.uniform(-np.pi, np.pi, 2)
        m = dynamics_terms(two_link_arm(), q, np.zeros(2)).inertia
        assert np.array_equal(m, m.T)
        assert np.linalg.eigvalsh(m).min() > 0


def test_passivity_skew_symmetry():
    """d/dt M - 2C plus its transpose vanishes along any motion."""
    model = two_link_arm()
    qs, qds, _, _ = random_samples(300, seed=2)
    h = 1e-6
    for q, qd in zip(qs, qds):
        m_plus = dynamics_terms(model, q + h * qd, qd).inertia
        m_minus = dynamics_terms(model, q - h * qd, qd).inertia
        m_dot = (m_plus - m_minus) / (2.0 * h)
        c = dynamics_terms(model, q, qd).coriolis
        skew = m_dot - 2.0 * c
        assert np.abs(skew + skew.T).max() <= 1e-6


def test_regressor_hand_value():
    # q2 = 0, qdot = 0, reference rate (1, 0): pure inertia columns.
    y = regressor(two_link_arm(), np.zeros(2), np.zeros(2), np.zeros(2), np.array([1.0, 0.0]))
    assert np.abs(y - np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]])).max() <= 1e-15


def test_regressor_identity_against_dynamics_terms():
    qs, qds, zs, zds = random_samples(300, seed=3)
    rng = np.random.default_rng(4)
    for q, qd, z, zd in zip(qs, qds, zs, zds):
        theta = rng.uniform(0.05, 1.0, 3)
        model = RobotModel(theta)
        y = regressor(model, q, qd, z, zd)
        terms = dynamics_terms(model, q, qd)
        direct = terms.inertia @ zd + terms.coriolis @ z + terms.gravity
        assert np.abs(y @ theta - direct).max() <= 1e-10


def test_regressor_independent_of_theta():
    q, qd, z, zd = (np.array(v) for v in ([0.2, -1.1], [0.5, 2.0], [1.0, -0.5], [0.3, 0.7]))
    y1 = regressor(RobotModel(np.array([1.0, 2.0, 3.0])), q, qd, z, zd)
    y2 = regressor(RobotModel(np.array([0.1, 0.2, 0.3])), q, qd, z, zd)
    assert np.array_equal(y1, y2)


def test_forward_accel_inverts_dynamics():
    model = two_link_arm()
    qs, qds, _, _ = random_samples(100, seed=5)
    rng = np.random.default_rng(6)
    for q, qd in zip(qs, qds):
        tau = rng.uniform(-10.0, 10.0, 2)
        acc = forward_accel(model, q, qd, tau)
        terms = dynamics_terms(model, q, qd)
        assert np.abs(terms.inertia @ acc + terms.coriolis @ qd - tau).max() <= 1e-9


def test_forward_accel_rejects_singular_inertia():
    # theta = (2, 1, 1) at q2 = 0 gives [[4, 2], [2, 1]], determinant 0.
    model = RobotModel(np.array([2.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        forward_accel(model, np.zeros(2), np.zeros(2), np.zeros(2))
