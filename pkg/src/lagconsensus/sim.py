"""Closed-loop fixed-step simulation of the networked arms.

Time advances on a uniform macro grid (the sampling period of the
communication layer).  The scheduled graph and all *delayed* neighbor
samples freeze over each macro-step; undelayed edges couple the live
stage values, so a zero-delay network integrates as one smooth coupled
ODE.  History buffers commit xi(t + h) only after the step completes,
and every macro sample is recorded.

Within a macro-step the stacked state (q, qdot, z, theta_hat) advances
by SUBSTEPS classical fourth-order micro-steps.  The torque loop is
stiff: the elbow inertia of the lightest arm dips to ~0.013, so with the
default feedback gain the fast eigenvalue reaches ~2.3e3 1/s and a bare
5 ms step sits far outside the stability span of any explicit
fourth-order method.  Eight micro-steps bring h*lambda down to ~1.4.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import analysis, control, robot
from .graphs import SwitchingSchedule
from .network import DelayMatrix, HistoryBuffer
from .stepping import grid_count, rk4_step

__all__ = [
    "SimulationDiverged",
    "ScenarioRuntime",
    "WorldState",
    "StepContext",
    "Simulation",
    "SignalTrace",
    "closed_loop_derivative",
    "run_scenario",
    "replay_step",
    "run_reduced_delayed",
]

DOF = 2
PARAM_COUNT = 3

# Micro-steps per macro-step; see the module docstring for the stiffness
# arithmetic.  Halving the macro-step halves the micro-step with it, so
# order-of-convergence experiments see a plain fourth-order method.
SUBSTEPS = 8


class SimulationDiverged(RuntimeError):
    """The integrator produced a nonfinite state; message says when and who."""


class _Pre(NamedTuple):
    """Scalar gains and parameter columns unpacked for the hot loop."""

    alpha: float
    k00: float
    k01: float
    k10: float
    k11: float
    gamma_rows: tuple  # ((g00, g01, g02), (g10, g11, g12), (g20, g21, g22))
    t1: np.ndarray  # (n,) true parameter columns
    t2: np.ndarray
    t3: np.ndarray


@dataclass(frozen=True, eq=False)
class ScenarioRuntime:
    """Everything one run needs, fully resolved and cross-validated."""

    thetas: np.ndarray  # (n, 3) true plant parameters per agent
    gains: control.ControllerGains
    schedule: SwitchingSchedule
    delays: DelayMatrix
    q0: np.ndarray  # (n, 2)
    qd0: np.ndarray  # (n, 2)
    horizon: float
    step: float

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=float)
        q0 = np.array(self.q0, dtype=float)
        qd0 = np.array(self.qd0, dtype=float)
        n = thetas.shape[0]
        if thetas.shape != (n, PARAM_COUNT):
            raise ValueError("thetas must be (n, 3)")
        if q0.shape != (n, DOF) or qd0.shape != (n, DOF):
            raise ValueError("q0, qd0 must be (n, 2)")
        if self.schedule.n != n or self.delays.n != n:
            raise ValueError("schedule, delays and parameter table disagree on n")
        if self.delays.step != self.step:
            raise ValueError("delay grid must equal the integrator step")
        grid_count(self.horizon, self.step)  # horizon must sit on the grid
        for arr in (thetas, q0, qd0):
            arr.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "q0", q0)
        object.__setattr__(self, "qd0", qd0)
        k = self.gains.k
        g = self.gains.gamma
        object.__setattr__(
            self,
            "_pre",
            _Pre(
                alpha=float(self.gains.alpha),
                k00=float(k[0, 0]),
                k01=float(k[0, 1]),
                k10=float(k[1, 0]),
                k11=float(k[1, 1]),
                gamma_rows=tuple(tuple(float(v) for v in row) for row in g),
                t1=thetas[:, 0].copy(),
                t2=thetas[:, 1].copy(),
                t3=thetas[:, 2].copy(),
            ),
        )

    @property
    def n(self) -> int:
        return self.thetas.shape[0]

    def models(self):
        return [robot.RobotModel(th) for th in self.thetas]

    def with_step(self, step):
        """Same scenario on a finer (or coarser) grid; delays must still align."""
        return ScenarioRuntime(
            thetas=self.thetas,
            gains=self.gains,
            schedule=self.schedule,
            delays=DelayMatrix(self.delays.seconds, step),
            q0=self.q0,
            qd0=self.qd0,
            horizon=self.horizon,
            step=step,
        )

    def with_horizon(self, horizon):
        return ScenarioRuntime(
            thetas=self.thetas,
            gains=self.gains,
            schedule=self.schedule,
            delays=self.delays,
            q0=self.q0,
            qd0=self.qd0,
            horizon=horizon,
            step=self.step,
        )


@dataclass(frozen=True)
class WorldState:
    """Snapshot of the stacked world at one instant."""

    t: float
    q: np.ndarray
    qd: np.ndarray
    z: np.ndarray
    theta_hat: np.ndarray


@dataclass(frozen=True, eq=False)
class StepContext:
    """Coupling data frozen over one macro-step [t, t + h)."""

    live_w: np.ndarray  # (n, n) weights of edges read without delay
    degree: np.ndarray  # (n,) total coupling weight per agent, all edges
    frozen_drive: np.ndarray  # (n, 2) sum of w_ij xi_j(t - T_ij) over delayed edges


class _Stage(NamedTuple):
    xi: np.ndarray
    z_rate: np.ndarray
    s: np.ndarray
    tau: np.ndarray
    q_accel: np.ndarray
    theta_rate: np.ndarray


def _freeze_context(schedule, buffer, delay_steps, step_index, step, graph_index=None):
    """Freeze graph weights and delayed xi samples for the step starting now.

    The ruling graph is sampled at the step midpoint: identical to the
    start-of-step value because switches sit on the grid, but immune to
    float dust in the event times.
    """
    if graph_index is None:
        graph_index = schedule.index_at((step_index + 0.5) * step)
    w = schedule.graphs[graph_index].weights
    degree = w.sum(axis=1)
    delayed = (delay_steps > 0) & (w > 0)
    live_w = np.where(delayed, 0.0, w)
    frozen = np.zeros((w.shape[0], buffer.m))
    for i, j in zip(*np.nonzero(delayed)):
        frozen[i] += w[i, j] * buffer.sample(j, step_index - delay_steps[i, j])
    return StepContext(live_w=live_w, degree=degree, frozen_drive=frozen)


def _stage_eval(state, ctx: StepContext, runtime: ScenarioRuntime) -> _Stage:
    """All per-stage controller and plant quantities, vectorized over agents.

    This is the one place the closed loop is spelled out; the per-agent
    functions in `robot` and `control` define the same maps one agent at a
    time, and the test suite pins both routes together.
    """
    q = state[:, 0:2]
    qd = state[:, 2:4]
    z = state[:, 4:6]
    th_hat = state[:, 6:9]
    gains = runtime.gains
    alpha = gains.alpha

    xi = qd + alpha * q
    coupling = ctx.degree[:, None] * xi - ctx.live_w @ xi - ctx.frozen_drive
    z_rate = -alpha * qd - coupling
    s = qd - z

    c2 = np.cos(q[:, 1])
    s2 = np.sin(q[:, 1])
    # Regressor entries with (zeta, zeta_dot) = (z, z_rate).
    y11 = z_rate[:, 0]
    y12 = z_rate[:, 1]
    y13 = c2 * (2.0 * z_rate[:, 0] + z_rate[:, 1]) - s2 * (
        qd[:, 1] * z[:, 0] + (qd[:, 0] + qd[:, 1]) * z[:, 1]
    )
    y22 = z_rate[:, 0] + z_rate[:, 1]
    y23 = c2 * z_rate[:, 0] + s2 * qd[:, 0] * z[:, 0]

    a1, a2, a3 = th_hat[:, 0], th_hat[:, 1], th_hat[:, 2]
    tau = -(s @ gains.k.T) + np.column_stack(
        [y11 * a1 + y12 * a2 + y13 * a3, y22 * a2 + y23 * a3]
    )

    t1, t2, t3 = runtime.thetas[:, 0], runtime.thetas[:, 1], runtime.thetas[:, 2]
    m11 = t1 + 2.0 * t3 * c2
    m12 = t2 + t3 * c2
    m22 = t2
    # C(q, qd) qd for the gravity-free arm, written out.
    cqd1 = -t3 * s2 * (2.0 * qd[:, 0] * qd[:, 1] + qd[:, 1] ** 2)
    cqd2 = t3 * s2 * qd[:, 0] ** 2
    rhs1 = tau[:, 0] - cqd1
    rhs2 = tau[:, 1] - cqd2
    det = m11 * m22 - m12 * m12
    q_accel = np.column_stack([(m22 * rhs1 - m12 * rhs2) / det, (m11 * rhs2 - m12 * rhs1) / det])

    yts = np.column_stack([y11 * s[:, 0], y12 * s[:, 0] + y22 * s[:, 1], y13 * s[:, 0] + y23 * s[:, 1]])
    theta_rate = -(yts @ gains.gamma.T)

    return _Stage(xi=xi, z_rate=z_rate, s=s, tau=tau, q_accel=q_accel, theta_rate=theta_rate)


def _derivative(state, ctx: StepContext, pre: _Pre, out):
    """Hot-loop version of the closed-loop rate, written into `out`.

    Same physics as `_stage_eval` with the gain matrices unrolled to
    scalars and no intermediate observables; the test suite pins the two
    routes against each other.
    """
    qd = state[:, 2:4]
    qd1 = state[:, 2]
    qd2 = state[:, 3]
    z1 = state[:, 4]
    z2 = state[:, 5]
    a1 = state[:, 6]
    a2 = state[:, 7]
    a3 = state[:, 8]

    xi = qd + pre.alpha * state[:, 0:2]
    drive = ctx.live_w @ xi
    drive += ctx.frozen_drive
    zr = drive - ctx.degree[:, None] * xi
    zr -= pre.alpha * qd
    zr1 = zr[:, 0]
    zr2 = zr[:, 1]
    s1 = qd1 - z1
    s2v = qd2 - z2

    c2 = np.cos(state[:, 1])
    s2 = np.sin(state[:, 1])
    y13 = c2 * (2.0 * zr1 + zr2) - s2 * (qd2 * z1 + (qd1 + qd2) * z2)
    y22 = zr1 + zr2
    y23 = c2 * zr1 + s2 * (qd1 * z1)
    tau1 = zr1 * a1 + zr2 * a2 + y13 * a3 - (pre.k00 * s1 + pre.k01 * s2v)
    tau2 = y22 * a2 + y23 * a3 - (pre.k10 * s1 + pre.k11 * s2v)

    t3c2 = pre.t3 * c2
    m11 = pre.t1 + 2.0 * t3c2
    m12 = pre.t2 + t3c2
    t3s2 = pre.t3 * s2
    rhs1 = tau1 + t3s2 * (2.0 * qd1 * qd2 + qd2 * qd2)
    rhs2 = tau2 - t3s2 * (qd1 * qd1)
    rec = 1.0 / (m11 * pre.t2 - m12 * m12)

    u1 = zr1 * s1
    u2 = zr2 * s1 + y22 * s2v
    u3 = y13 * s1 + y23 * s2v
    g0, g1, g2 = pre.gamma_rows

    out[:, 0:2] = qd
    out[:, 2] = (pre.t2 * rhs1 - m12 * rhs2) * rec
    out[:, 3] = (m11 * rhs2 - m12 * rhs1) * rec
    out[:, 4:6] = zr
    out[:, 6] = -(g0[0] * u1 + g0[1] * u2 + g0[2] * u3)
    out[:, 7] = -(g1[0] * u1 + g1[1] * u2 + g1[2] * u3)
    out[:, 8] = -(g2[0] * u1 + g2[1] * u2 + g2[2] * u3)
    return out


def closed_loop_derivative(state, ctx: StepContext, runtime: ScenarioRuntime):
    """Stacked state rate for all agents; columns are (q, qd, z, theta_hat)."""
    return _derivative(state, ctx, runtime._pre, np.empty_like(state))


def _advance_macro(state, ctx: StepContext, runtime: ScenarioRuntime):
    """One macro-step under a frozen context: SUBSTEPS fourth-order stages."""
    pre = runtime._pre
    h = runtime.step / SUBSTEPS
    y = state.copy()
    k1 = np.empty_like(y)
    k2 = np.empty_like(y)
    k3 = np.empty_like(y)
    k4 = np.empty_like(y)
    tmp = np.empty_like(y)
    for _ in range(SUBSTEPS):
        _derivative(y, ctx, pre, k1)
        np.multiply(k1, 0.5 * h, out=tmp)
        tmp += y
        _derivative(tmp, ctx, pre, k2)
        np.multiply(k2, 0.5 * h, out=tmp)
        tmp += y
        _derivative(tmp, ctx, pre, k3)
        np.multiply(k3, h, out=tmp)
        tmp += y
        _derivative(tmp, ctx, pre, k4)
        k2 += k3
        k2 *= 2.0
        k1 += k2
        k1 += k4
        k1 *= h / 6.0
        y += k1
    return y


class Simulation:
    """Owns the mutable world: stacked state, step counter, xi history ring."""

    def __init__(self, runtime: ScenarioRuntime):
        self.runtime = runtime
        n = runtime.n
        self._state = np.hstack(
            [runtime.q0, runtime.qd0, np.zeros((n, DOF)), np.zeros((n, PARAM_COUNT))]
        )
        self._step_index = 0
        xi0 = runtime.qd0 + runtime.gains.alpha * runtime.q0
        self.buffer = HistoryBuffer(xi0, runtime.step, int(runtime.delays.steps.max()))

    @property
    def t(self) -> float:
        return self._step_index * self.runtime.step

    @property
    def step_index(self) -> int:
        return self._step_index

    def world(self) -> WorldState:
        s = self._state
        return WorldState(
            t=self.t,
            q=s[:, 0:2].copy(),
            qd=s[:, 2:4].copy(),
            z=s[:, 4:6].copy(),
            theta_hat=s[:, 6:9].copy(),
        )

    def step_context(self) -> StepContext:
        return _freeze_context(
            self.runtime.schedule,
            self.buffer,
            self.runtime.delays.steps,
            self._step_index,
            self.runtime.step,
        )

    def observables(self, ctx: StepContext | None = None) -> _Stage:
        """Controller quantities at the current sample under the frozen context."""
        if ctx is None:
            ctx = self.step_context()
        return _stage_eval(self._state, ctx, self.runtime)

    def step(self, ctx: StepContext | None = None):
        """Advance one macro-step and commit the new xi sample to history."""
        if ctx is None:
            ctx = self.step_context()
        h = self.runtime.step
        with np.errstate(over="ignore", invalid="ignore"):
            new_state = _advance_macro(self._state, ctx, self.runtime)
        if not np.isfinite(new_state).all():
            bad = ", ".join(str(i + 1) for i in np.unique(np.nonzero(~np.isfinite(new_state))[0]))
            raise SimulationDiverged(
                f"nonfinite state at t = {self.t + h:.6f} s (agents {bad}); "
                "the step size is too coarse for these gains or the model is broken"
            )
        self._state = new_state
        self._step_index += 1
        self.buffer.record(new_state[:, 2:4] + self.runtime.gains.alpha * new_state[:, 0:2])


@dataclass(eq=False)
class SignalTrace:
    """Uniformly sampled run record; per-agent arrays are [sample, agent, coord]."""

    times: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    z: np.ndarray
    s: np.ndarray
    theta_hat: np.ndarray
    tau: np.ndarray
    xi: np.ndarray
    v_agents: np.ndarray  # (samples, n) per-agent storage
    consensus_err: np.ndarray
    max_speed: np.ndarray
    v_total: np.ndarray
    vstar: np.ndarray  # (samples, dof) windowed spread per coordinate
    step: float
    switch_times: np.ndarray
    runtime_seconds: float = 0.0

    @property
    def sample_count(self) -> int:
        return self.times.shape[0]

    def index_of(self, t: float) -> int:
        k = round(t / self.step)
        if not 0 <= k < self.sample_count:
            raise ValueError(f"t = {t} outside the recorded horizon")
        return int(k)


def _storage_series(trace_s, trace_q, trace_th, runtime: ScenarioRuntime):
    """Per-agent storage V_i at every sample, vectorized over the whole trace."""
    t1 = runtime.thetas[:, 0]
    t2 = runtime.thetas[:, 1]
    t3 = runtime.thetas[:, 2]
    c2 = np.cos(trace_q[:, :, 1])
    m11 = t1[None, :] + 2.0 * t3[None, :] * c2
    m12 = t2[None, :] + t3[None, :] * c2
    m22 = np.broadcast_to(t2[None, :], c2.shape)
    s1, s2 = trace_s[:, :, 0], trace_s[:, :, 1]
    quad = 0.5 * (m11 * s1**2 + 2.0 * m12 * s1 * s2 + m22 * s2**2)
    err = trace_th - runtime.thetas[None, :, :]
    gamma_inv = np.linalg.inv(runtime.gains.gamma)
    pterm = 0.5 * np.einsum("tni,ij,tnj->tn", err, gamma_inv, err)
    return quad + pterm


def run_scenario(runtime: ScenarioRuntime) -> SignalTrace:
    """Integrate the full closed loop and record every macro-step."""
    started = time.perf_counter()
    sim = Simulation(runtime)
    steps = grid_count(runtime.horizon, runtime.step)
    n = runtime.n
    shape = (steps + 1, n, DOF)
    rec = {
        "q": np.empty(shape),
        "qd": np.empty(shape),
        "z": np.empty(shape),
        "s": np.empty(shape),
        "tau": np.empty(shape),
        "xi": np.empty(shape),
        "theta_hat": np.empty((steps + 1, n, PARAM_COUNT)),
    }
    for k in range(steps + 1):
        ctx = sim.step_context()
        stage = sim.observables(ctx)
        state = sim._state
        rec["q"][k] = state[:, 0:2]
        rec["qd"][k] = state[:, 2:4]
        rec["z"][k] = state[:, 4:6]
        rec["theta_hat"][k] = state[:, 6:9]
        rec["s"][k] = stage.s
        rec["tau"][k] = stage.tau
        rec["xi"][k] = stage.xi
        if k < steps:
            sim.step(ctx)
    times = np.arange(steps + 1) * runtime.step
    v_agents = _storage_series(rec["s"], rec["q"], rec["theta_hat"], runtime)
    consensus = np.array([analysis.consensus_error(qk) for qk in rec["q"]])
    max_speed = np.abs(rec["qd"]).max(axis=(1, 2))
    vstar = np.column_stack(
        [
            analysis.moreau_functional(rec["xi"], runtime.step, runtime.delays.max_delay, coord)
            for coord in range(DOF)
        ]
    )
    return SignalTrace(
        times=times,
        q=rec["q"],
        qd=rec["qd"],
        z=rec["z"],
        s=rec["s"],
        theta_hat=rec["theta_hat"],
        tau=rec["tau"],
        xi=rec["xi"],
        v_agents=v_agents,
        consensus_err=consensus,
        max_speed=max_speed,
        v_total=v_agents.sum(axis=1),
        vstar=vstar,
        step=runtime.step,
        switch_times=runtime.schedule.switch_times_in(runtime.horizon),
        runtime_seconds=time.perf_counter() - started,
    )


class _TraceHistory:
    """Adapter exposing recorded xi samples with the HistoryBuffer protocol."""

    def __init__(self, trace: SignalTrace):
        self._xi = trace.xi
        self.step = trace.step
        self.m = trace.xi.shape[2]

    def sample(self, agent, step_index):
        return self._xi[max(step_index, 0), agent]


def replay_step(trace: SignalTrace, runtime: ScenarioRuntime, step_index: int):
    """Re-integrate macro-step `step_index` from the recorded state.

    The frozen context is rebuilt from the recorded xi history, so a
    correct trace reproduces itself bit for bit; any discontinuity
    injected at a switch (state reset, early graph change) would surface
    here as a mismatch against the recorded next sample.
    """
    state = np.hstack(
        [
            trace.q[step_index],
            trace.qd[step_index],
            trace.z[step_index],
            trace.theta_hat[step_index],
        ]
    )
    ctx = _freeze_context(
        runtime.schedule,
        _TraceHistory(trace),
        runtime.delays.steps,
        step_index,
        runtime.step,
    )
    return _advance_macro(state, ctx, runtime)


def run_reduced_delayed(schedule, delays: DelayMatrix, xi0, horizon, step):
    """Integrate the bare delayed-consensus network xi' = -coupling.

    This is the closed loop with the sliding error pinned to zero: no arm,
    no controller, just the delayed disagreement flow whose windowed
    spread is provably nonincreasing.  Returns (times, samples).
    """
    xi = np.array(xi0, dtype=float)
    if xi.ndim != 2:
        raise ValueError("xi0 must be (agents, coords)")
    buffer = HistoryBuffer(xi, step, int(delays.steps.max()))
    steps = grid_count(horizon, step)
    out = np.empty((steps + 1,) + xi.shape)
    out[0] = xi
    for k in range(steps):
        ctx = _freeze_context(schedule, buffer, delays.steps, k, step)

        def rate(_, y):
            return -(ctx.degree[:, None] * y - ctx.live_w @ y - ctx.frozen_drive)

        xi = rk4_step(rate, k * step, xi, step)
        buffer.record(xi)
        out[k + 1] = xi
    return np.arange(steps + 1) * step, out
