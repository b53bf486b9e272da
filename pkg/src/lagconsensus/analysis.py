"""Signal norms, consensus metrics, and a desk-scale stability lab.

The lab half of this module treats small linear time-varying systems
y' = A(t) y + u as numerical experiments: it integrates transition
matrices, fits exponential decay envelopes to their norms, and checks the
integral input-output bounds that the full nonlinear network inherits from
its error dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate

from . import graphs as graphlib
from .stepping import grid_count, rk4_step

__all__ = [
    "lp_norm",
    "lp_growth",
    "lyapunov_V",
    "consensus_error",
    "moreau_functional",
    "LTVSystem",
    "constant_system",
    "alternating_system",
    "schedule_difference_system",
    "transition_matrix",
    "DecayFit",
    "decay_fit",
    "simulate_forced",
    "StabilityReport",
    "integral_lp_check",
    "prop2_check",
]

DECAY_RESIDUAL_TOL = 0.1

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _magnitudes(samples):
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        return np.abs(x)
    return np.linalg.norm(x.reshape(x.shape[0], -1), axis=1)


def lp_norm(samples, step, p):
    """Lp norm of a uniformly sampled signal by trapezoid quadrature.

    Vector-valued samples are reduced to Euclidean magnitude per sample
    first; p = inf takes the sample max instead of a quadrature.
    """
    mags = _magnitudes(samples)
    if p == math.inf:
        return float(mags.max())
    if not 1 <= p < math.inf:
        raise ValueError("p must lie in [1, inf]")
    return float(_trapezoid(mags**p, dx=step) ** (1.0 / p))


def lp_growth(samples, step, p=2):
    """Relative Lp growth from the first half of a trace to the whole of it.

    Small growth certifies the norm has stabilized: feed a trace over
    [0, 2T] to compare the horizon T against 2T.
    """
    mags = _magnitudes(samples)
    half = mags.shape[0] // 2
    first = lp_norm(mags[: half + 1], step, p)
    full = lp_norm(mags, step, p)
    if first == 0.0:
        return 0.0 if full == 0.0 else math.inf
    return (full - first) / first


def lyapunov_V(s, theta_hat, theta_true, inertia, gamma):
    """Per-agent storage 0.5 s'Ms + 0.5 e'inv(gamma)e with e the parameter error.

    Along the closed loop this decreases at rate s'ks regardless of the
    topology or delays, which is what the per-step dissipation check
    asserts.
    """
    s = np.asarray(s, dtype=float)
    err = np.asarray(theta_hat, dtype=float) - np.asarray(theta_true, dtype=float)
    return float(0.5 * s @ np.asarray(inertia) @ s + 0.5 * err @ np.linalg.solve(gamma, err))


def consensus_error(q):
    """Worst pairwise sup-norm disagreement max over pairs |q_i - q_j|_inf."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            worst = max(worst, float(np.abs(q[i] - q[j]).max()))
    return worst


def moreau_functional(xi_history, step, max_delay, coord):
    """Windowed spread of one xi coordinate: max minus min over all agents
    and over the trailing window [t - max_delay, t].

    Along a pure delayed-consensus network this never increases; the full
    closed loop adds a sliding-error input, so there the series is only a
    diagnostic.  History before t = 0 is the constant initial sample, so
    clamping the window at 0 loses nothing.
    """
    xi = np.asarray(xi_history, dtype=float)
    values = xi[..., coord] if xi.ndim == 3 else xi
    per_max = values.max(axis=1)
    per_min = values.min(axis=1)
    window = round(max_delay / step) + 1
    count = per_max.shape[0]
    out_max = np.empty(count)
    out_min = np.empty(count)
    lead = min(window, count)
    out_max[:lead] = np.maximum.accumulate(per_max[:lead])
    out_min[:lead] = np.minimum.accumulate(per_min[:lead])
    if count > window:
        sliding = np.lib.stride_tricks.sliding_window_view(per_max, window)
        out_max[window - 1 :] = sliding.max(axis=1)
        sliding = np.lib.stride_tricks.sliding_window_view(per_min, window)
        out_min[window - 1 :] = sliding.min(axis=1)
    return out_max - out_min


@dataclass(frozen=True, eq=False)
class LTVSystem:
    """A bounded coefficient family t -> A(t), piecewise-constant or smooth."""

    dim: int
    a_of_t: Callable[[float], np.ndarray]
    bound: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if not self.bound >= 0:
            raise ValueError("declared coefficient bound must be nonnegative")


def constant_system(a) -> LTVSystem:
    a = np.atleast_2d(np.array(a, dtype=float))
    return LTVSystem(a.shape[0], lambda t: a, float(np.linalg.norm(a, 2)))


def alternating_system(values, dwell) -> LTVSystem:
    """Deterministic cyclic switching through `values`, one entry per dwell."""
    mats = [np.atleast_2d(np.array(v, dtype=float)) for v in values]
    if not mats:
        raise ValueError("alternating system needs at least one value")
    if dwell <= 0:
        raise ValueError("dwell must be positive")

    def sampler(t):
        return mats[int(t // dwell) % len(mats)]

    bound = max(float(np.linalg.norm(m, 2)) for m in mats)
    return LTVSystem(mats[0].shape[0], sampler, bound)


def schedule_difference_system(schedule) -> LTVSystem:
    """The consecutive-difference consensus system of a switching schedule.

    A(t) = -Omega(t), with Omega the difference map of the scheduled
    graph's Laplacian; its decay is exactly the network's consensus decay,
    one scalar coordinate at a time.
    """
    omegas = [-graphlib.difference_map(graphlib.laplacian(g)) for g in schedule.graphs]

    def sampler(t):
        return omegas[schedule.index_at(t)]

    bound = max(float(np.linalg.norm(m, 2)) for m in omegas)
    return LTVSystem(schedule.n - 1, sampler, bound)


def transition_matrix(system: LTVSystem, t0, t1, step) -> np.ndarray:
    """Transition matrix of y' = A(t) y from t0 to t1 >= t0.

    Same one-step method as the simulator, with the coefficient frozen
    over each macro-step.  A(t) is sampled at the step midpoint, which
    equals the start-of-step value for grid-aligned piecewise-constant
    systems (the only kind the acceptance lab uses); for smooth systems
    the freezing costs accuracy order but not stability.
    """
    phi = np.eye(system.dim)
    if t1 == t0:
        return phi
    for k in range(grid_count(t1 - t0, step)):
        t = t0 + k * step
        a = system.a_of_t(t + 0.5 * step)
        phi = rk4_step(lambda _, y: a @ y, t, phi, step)
    return phi


@dataclass(frozen=True)
class DecayFit:
    """Envelope l1 exp(-l2 dt) fitted to transition-matrix norms.

    residual is the worst excess of an observed norm above the fitted
    envelope (linear scale, clipped at zero).  l1 and l2 are only an
    empirical certificate when `certified` is true.
    """

    l1: float
    l2: float
    residual: float

    @property
    def certified(self) -> bool:
        return self.l2 > 0 and self.residual <= DECAY_RESIDUAL_TOL

    @property
    def l1_over_l2(self) -> float:
        """Estimate of the integral of |transition matrix| over elapsed time."""
        return self.l1 / self.l2


def decay_fit(system: LTVSystem, t0_grid, horizon, step) -> DecayFit:
    """Least-squares exponential envelope for pooled transition-matrix norms.

    For each start time t0 on the grid, |transition(t0 + dt, t0)| is sampled
    on the step grid over `horizon`; log-norms are pooled and fit against
    log l1 - l2 dt.  A nonpositive fitted l2 is reported through the fit,
    never raised: it simply means no decay certificate.
    """
    dts = []
    norms = []
    count = grid_count(horizon, step)
    for t0 in t0_grid:
        phi = np.eye(system.dim)
        dts.append(0.0)
        norms.append(1.0)
        for k in range(count):
            t = t0 + k * step
            a = system.a_of_t(t + 0.5 * step)
            phi = rk4_step(lambda _, y: a @ y, t, phi, step)
            dts.append((k + 1) * step)
            norms.append(float(np.linalg.norm(phi, 2)))
    dts = np.array(dts)
    norms = np.array(norms)
    logn = np.log(np.maximum(norms, 1e-300))
    slope, intercept = np.polyfit(dts, logn, 1)
    l1 = float(np.exp(intercept))
    l2 = float(-slope)
    envelope = l1 * np.exp(-l2 * dts)
    residual = float(np.clip(norms - envelope, 0.0, None).max())
    return DecayFit(l1=l1, l2=l2, residual=residual)


def simulate_forced(system: LTVSystem, u, horizon, step, y0=None):
    """Integrate y' = A(t) y + u(t) on the step grid; returns (times, samples).

    The coefficient freezes per step exactly as in `transition_matrix`; the
    input u is a callable sampled at the stage times.
    """
    count = grid_count(horizon, step)
    y = np.zeros(system.dim) if y0 is None else np.array(y0, dtype=float)
    times = np.arange(count + 1) * step
    out = np.empty((count + 1, system.dim))
    out[0] = y
    for k in range(count):
        t = k * step
        a = system.a_of_t(t + 0.5 * step)
        y = rk4_step(lambda tt, yy: a @ yy + u(tt), t, y, step)
        out[k + 1] = y
    return times, out


@dataclass(frozen=True, eq=False)
class StabilityReport:
    """One lab verdict with its numbers; render with lines() or row()."""

    name: str
    passed: bool
    values: dict = field(default_factory=dict)

    def lines(self):
        out = [f"{self.name}.verdict: {'PASS' if self.passed else 'FAIL'}"]
        for key, val in self.values.items():
            if isinstance(val, float):
                out.append(f"{self.name}.{key}: {val:.9e}")
            else:
                out.append(f"{self.name}.{key}: {val}")
        return out

    def row(self):
        cells = [f"{k}={v:.9e}" if isinstance(v, float) else f"{k}={v}" for k, v in self.values.items()]
        return ",".join(["ROW", self.name] + cells + [f"pass={int(self.passed)}"])


def _sample_input(u, times):
    return np.array([np.atleast_1d(np.asarray(u(t), dtype=float)) for t in times])


def integral_lp_check(
    system: LTVSystem,
    u,
    p,
    horizon,
    step,
    fit: DecayFit | None = None,
    u_integral=None,
    name="integral_lp",
) -> StabilityReport:
    """Check the integral-input bound |y - U|_p <= sup|A| (l1/l2) |U|_p, U = int u.

    Also checks the derived output bound |y|_p <= (1 + sup|A| l1/l2) |U|_p.
    `u_integral` supplies U in closed form when known; otherwise U is
    accumulated by trapezoid on the sample grid.  The bound only means
    something when the decay fit is certified, which the report records.
    """
    if fit is None:
        fit = decay_fit(system, [0.0], horizon / 2.0, step)
    times, y = simulate_forced(system, u, horizon, step)
    if u_integral is not None:
        ustar = _sample_input(u_integral, times)
    else:
        ustar = scipy.integrate.cumulative_trapezoid(_sample_input(u, times), dx=step, axis=0, initial=0.0)
    ystar = y - ustar
    ratio = fit.l1_over_l2
    lhs = lp_norm(ystar, step, p)
    ustar_norm = lp_norm(ustar, step, p)
    rhs = system.bound * ratio * ustar_norm
    y_norm = lp_norm(y, step, p)
    y_bound = (1.0 + system.bound * ratio) * ustar_norm
    passed = bool(fit.certified and np.isfinite(lhs) and lhs <= rhs and y_norm <= y_bound)
    return StabilityReport(
        name=name,
        passed=passed,
        values={
            "p": float(p),
            "lhs": lhs,
            "rhs": rhs,
            "y_norm": y_norm,
            "y_bound": y_bound,
            "sup_a": system.bound,
            "l1": fit.l1,
            "l2": fit.l2,
            "fit_residual": fit.residual,
            "certified": fit.certified,
        },
    )


def prop2_check(
    system: LTVSystem,
    u,
    p,
    horizon,
    step,
    fit: DecayFit | None = None,
    tail_fraction=0.1,
    tail_tol=1e-6,
    name="forced_response",
) -> StabilityReport:
    """Forced-response sanity for u in Lp.

    Finite p: the output norm must have essentially stabilized (the
    trailing `tail_fraction` of the horizon carries < 10 % of the total Lp
    mass) and the terminal sup must fall under `tail_tol`.  p = inf claims
    boundedness only: sup|y| <= l1 |y0| + (l1/l2) sup|u| from the fitted
    envelope.
    """
    if fit is None:
        fit = decay_fit(system, [0.0], horizon / 2.0, step)
    times, y = simulate_forced(system, u, horizon, step)
    mags = _magnitudes(y)
    tail_start = int(round((1.0 - tail_fraction) * (len(times) - 1)))
    values = {"p": float(p), "l1": fit.l1, "l2": fit.l2, "certified": fit.certified}
    if p == math.inf:
        u_sup = lp_norm(_sample_input(u, times), step, math.inf)
        y_sup = float(mags.max())
        bound = fit.l1 * float(mags[0]) + fit.l1_over_l2 * u_sup
        passed = bool(fit.certified and np.isfinite(y_sup) and y_sup <= bound)
        values.update({"y_sup": y_sup, "bound": bound, "u_sup": u_sup})
        return StabilityReport(name=name, passed=passed, values=values)
    total = lp_norm(y, step, p)
    tail = lp_norm(y[tail_start:], step, p)
    tail_sup = float(mags[tail_start:].max())
    ratio = tail / total if total > 0 else 0.0
    passed = bool(
        fit.certified
        and np.isfinite(total)
        and ratio < 0.1
        and tail_sup < tail_tol
    )
    values.update(
        {
            "total_norm": total,
            "tail_norm": tail,
            "tail_ratio": ratio,
            "tail_sup": tail_sup,
            "tail_tol": float(tail_tol),
        }
    )
    return StabilityReport(name=name, passed=passed, values=values)
