"""Closed-loop integration: semantics, determinism, and the dual route.

The vectorized hot loop in `sim` and the per-agent functions in `control`
and `robot` describe the same closed loop twice.  The agreement test here
is what licenses trusting the fast path everywhere else.
"""

import numpy as np
import pytest

from lagconsensus import analysis, control, robot, sim
from lagconsensus.config import runtime_from_config, scenario_a
from lagconsensus.graphs import DirectedGraph, fixed_schedule, generate_schedule
from lagconsensus.network import DelayMatrix
from lagconsensus.sim import (
    ScenarioRuntime,
    Simulation,
    SimulationDiverged,
    closed_loop_derivative,
    replay_step,
    run_reduced_delayed,
    run_scenario,
)

THETAS3 = np.array([s * robot.NOMINAL_THETA for s in (0.9, 1.0, 1.1)])
Q03 = np.array([[0.5, -0.3], [-0.2, 0.4], [0.1, 0.8]])


def three_ring(reverse=False):
    edges = [((i + 1) % 3, i, 1.0) if reverse else (i, (i + 1) % 3, 1.0) for i in range(3)]
    return DirectedGraph.from_edges(3, edges)


def small_runtime(delay=0.0, k=30.0, step=0.005, horizon=2.0, schedule=None):
    if schedule is None:
        schedule = generate_schedule([three_ring(), three_ring(reverse=True)], 0.05, horizon, 7)
    return ScenarioRuntime(
        thetas=THETAS3,
        gains=control.ControllerGains.diagonal(k=k),
        schedule=schedule,
        delays=DelayMatrix(np.full((3, 3), delay), step),
        q0=Q03,
        qd0=np.zeros((3, 2)),
        horizon=horizon,
        step=step,
    )


def test_runtime_cross_validation():
    good = small_runtime()
    with pytest.raises(ValueError):
        ScenarioRuntime(
            thetas=THETAS3[:2],
            gains=good.gains,
            schedule=good.schedule,
            delays=good.delays,
            q0=Q03,
            qd0=np.zeros((3, 2)),
            horizon=2.0,
            step=0.005,
        )
    with pytest.raises(ValueError):
        ScenarioRuntime(
            thetas=THETAS3,
            gains=good.gains,
            schedule=good.schedule,
            delays=DelayMatrix(np.zeros((3, 3)), 0.01),
            q0=Q03,
            qd0=np.zeros((3, 2)),
            horizon=2.0,
            step=0.005,
        )


def test_agreed_rest_is_a_fixed_point():
    runtime = ScenarioRuntime(
        thetas=THETAS3,
        gains=control.ControllerGains.diagonal(),
        schedule=fixed_schedule([three_ring()], 0),
        delays=DelayMatrix(np.zeros((3, 3)), 0.005),
        q0=np.tile([0.7, -1.1], (3, 1)),
        qd0=np.zeros((3, 2)),
        horizon=0.5,
        step=0.005,
    )
    simulation = Simulation(runtime)
    rate = closed_loop_derivative(simulation._state, simulation.step_context(), runtime)
    assert np.all(rate == 0.0)
    for _ in range(100):
        simulation.step()
    world = simulation.world()
    assert np.all(world.q == runtime.q0)
    assert np.all(world.qd == 0.0)
    assert np.all(world.theta_hat == 0.0)


def test_without_edges_speeds_die_but_disagreement_stays():
    empty = DirectedGraph(np.zeros((3, 3)))
    runtime = small_runtime(horizon=5.0, schedule=fixed_schedule([empty], 0))
    trace = run_scenario(runtime)
    assert trace.max_speed[-1] < 1e-3
    assert trace.consensus_err[-1] > 0.1


def test_runs_are_bitwise_deterministic():
    first = run_scenario(small_runtime(delay=0.05))
    second = run_scenario(small_runtime(delay=0.05))
    for a, b in ((first.q, second.q), (first.qd, second.qd), (first.z, second.z), (first.theta_hat, second.theta_hat)):
        assert np.array_equal(a, b)


def per_agent_rate(simulation: Simulation, runtime: ScenarioRuntime):
    """The same closed-loop rate assembled one agent at a time.

    Neighbor xi values are read straight from the history ring (delayed
    edges) or the live state (zero-delay edges), then pushed through the
    scalar-agent controller and plant functions.
    """
    state = simulation._state
    k = simulation.step_index
    graph = runtime.schedule.graph_at((k + 0.5) * runtime.step)
    gains = runtime.gains
    models = runtime.models()
    out = np.empty_like(state)
    live_xi = state[:, 2:4] + gains.alpha * state[:, 0:2]
    for i in range(runtime.n):
        neighbors = list(graph.neighbors(i))
        rows = []
        for j in neighbors:
            lag = runtime.delays.steps[i, j]
            rows.append(
                simulation.buffer.sample(j, k - lag) if lag > 0 else live_xi[j]
            )
        view = (
            control.NeighborView(
                tuple(neighbors),
                graph.weights[i, neighbors],
                np.array(rows),
            )
            if neighbors
            else control.NeighborView.empty()
        )
        q, qd = state[i, 0:2], state[i, 2:4]
        z, th_hat = state[i, 4:6], state[i, 6:9]
        z_rate = control.zdot(q, qd, gains.alpha, view)
        s = control.sliding_s(qd, z)
        y = robot.regressor(models[i], q, qd, z, z_rate)
        tau = control.control_torque(models[i], q, qd, z, z_rate, th_hat, gains.k)
        out[i, 0:2] = qd
        out[i, 2:4] = robot.forward_accel(models[i], q, qd, tau)
        out[i, 4:6] = z_rate
        out[i, 6:9] = control.param_update_rate(y, s, gains.gamma)
    return out


def test_vectorized_rate_matches_per_agent_assembly():
    # Mixed coupling: agent 0 hears its ring neighbor a full second late,
    # everyone else live.  Warm up so the state is nothing special.
    delays = np.zeros((3, 3))
    delays[0, 1] = 1.0
    runtime = ScenarioRuntime(
        thetas=THETAS3,
        gains=control.ControllerGains.diagonal(),
        schedule=generate_schedule([three_ring(), three_ring(reverse=True)], 0.05, 3.0, 11),
        delays=DelayMatrix(delays, 0.005),
        q0=Q03,
        qd0=np.array([[0.2, -0.1], [0.0, 0.3], [-0.4, 0.1]]),
        horizon=3.0,
        step=0.005,
    )
    simulation = Simulation(runtime)
    for _ in range(40):
        simulation.step()
    fast = closed_loop_derivative(simulation._state, simulation.step_context(), runtime)
    slow = per_agent_rate(simulation, runtime)
    assert np.abs(fast - slow).max() <= 1e-12


def test_stage_observables_match_the_rate():
    runtime = small_runtime(delay=0.05)
    simulation = Simulation(runtime)
    for _ in range(25):
        simulation.step()
    ctx = simulation.step_context()
    stage = simulation.observables(ctx)
    rate = closed_loop_derivative(simulation._state, ctx, runtime)
    assert np.abs(rate[:, 2:4] - stage.q_accel).max() <= 1e-12
    assert np.abs(rate[:, 4:6] - stage.z_rate).max() <= 1e-12


def test_delayed_edges_read_recorded_samples():
    runtime = small_runtime(delay=0.05, horizon=1.0)  # 10-step lag
    trace = run_scenario(runtime)
    simulation = Simulation(runtime)
    for _ in range(30):
        simulation.step()
    ctx = simulation.step_context()
    graph = runtime.schedule.graph_at((30 + 0.5) * runtime.step)
    drive = np.zeros((3, 2))
    for i in range(3):
        for j in graph.neighbors(i):
            drive[i] += graph.weights[i, j] * trace.xi[30 - 10, j]
    assert np.array_equal(ctx.frozen_drive, drive)
    # Before one full lag has elapsed the initial sample is what neighbors see.
    early = Simulation(runtime)
    early.step()
    assert np.array_equal(
        early.buffer.sample(1, 1 - 10), trace.xi[0, 1]
    )


def test_replay_reproduces_every_recorded_transition():
    runtime = small_runtime(delay=0.05, horizon=1.5)
    trace = run_scenario(runtime)
    picks = [0, 7, 100, trace.sample_count - 2]
    picks += [trace.index_of(t) for t in trace.switch_times[:3]]
    for k in sorted(set(picks)):
        nxt = replay_step(trace, runtime, k)
        recorded = np.hstack(
            [trace.q[k + 1], trace.qd[k + 1], trace.z[k + 1], trace.theta_hat[k + 1]]
        )
        assert np.array_equal(nxt, recorded)


def test_stronger_feedback_shrinks_the_sliding_error():
    # Finer grid so the stiffer high-gain loop still integrates cleanly.
    schedule = fixed_schedule([three_ring()], 0)
    soft = run_scenario(small_runtime(k=30.0, step=0.0025, horizon=1.5, schedule=schedule))
    hard = run_scenario(small_runtime(k=90.0, step=0.0025, horizon=1.5, schedule=schedule))
    tail = slice(soft.index_of(1.2), None)
    assert np.abs(hard.s[tail]).max() < np.abs(soft.s[tail]).max()


def test_divergence_names_time_and_agents():
    runtime = small_runtime(k=3000.0, horizon=0.5)
    with pytest.raises(SimulationDiverged, match="agent"):
        run_scenario(runtime)


def test_preset_error_channels_stabilize_in_l2():
    # Doubling the horizon of the shipped scenario grows the L2 mass of
    # the disagreement and sliding channels by well under a percent: the
    # error signals have square-summable tails, not just small endpoints.
    cfg = scenario_a()
    cfg.horizon = 30.0
    trace = run_scenario(runtime_from_config(cfg))
    for series in (np.diff(trace.xi, axis=1), np.diff(trace.q, axis=1), trace.s):
        assert analysis.lp_growth(series, trace.step, p=2) < 0.01


def test_reduced_network_matches_the_two_agent_closed_form():
    both_ways = DirectedGraph.from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)])
    xi0 = np.array([[1.0, 0.0], [-1.0, 0.0]])
    times, xs = run_reduced_delayed(
        fixed_schedule([both_ways], 0), DelayMatrix(np.zeros((2, 2)), 0.005), xi0, 1.0, 0.005
    )
    diff = xs[:, 0, 0] - xs[:, 1, 0]
    assert np.abs(diff - 2.0 * np.exp(-2.0 * times)).max() <= 1e-10
    assert np.abs(xs[:, :, 0].sum(axis=1)).max() <= 1e-12
