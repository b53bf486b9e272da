"""Command line front end: run scenarios, verify invariants, drive the lab.

Exit codes: 0 success, 1 invariant or check failure, 2 configuration
error.  The environment variable LAGCONSENSUS_OUTDIR overrides the
config's output directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import (
    ConfigError,
    ScenarioConfig,
    graphs_from_config,
    load_config,
    runtime_from_config,
    scenario_a,
)
from .graphs import (
    DirectedGraph,
    generate_schedule,
    has_spanning_tree,
    laplacian,
    union_graphs,
)
from .sim import ScenarioRuntime, SignalTrace, SimulationDiverged, replay_step, run_scenario

__all__ = [
    "ENV_OUTDIR",
    "LYAPUNOV_SLACK",
    "Z_JUMP_TOL",
    "emit_outputs",
    "invariant_checks",
    "lab_reports",
    "main",
]

ENV_OUTDIR = "LAGCONSENSUS_OUTDIR"

# Per-step dissipation slack: V may rise by at most this times (1 + V).
LYAPUNOV_SLACK = 1e-8
Z_JUMP_TOL = 1e-9

AGENTS_HEADER = "t,agent,q1,q2,qd1,qd2,z1,z2,s1,s2,th1,th2,th3,tau1,tau2"
METRICS_HEADER = "t,consensus_err,max_speed,V_total,Vstar_1,Vstar_2"


def _fmt(value) -> str:
    return f"{value:.9e}"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"check_{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.detail})"


def lyapunov_violation(trace: SignalTrace) -> float:
    """Worst per-step storage increase beyond the integration slack.

    Nonpositive means every agent's storage was nonincreasing step to step
    within LYAPUNOV_SLACK * (1 + V).
    """
    v = trace.v_agents
    allowance = LYAPUNOV_SLACK * (1.0 + v[:-1])
    return float((v[1:] - v[:-1] - allowance).max())


def z_switch_jump(trace: SignalTrace, runtime: ScenarioRuntime) -> float:
    """Largest discontinuity of z across any switch instant.

    Each step that lands on a switch is re-integrated from the recorded
    state under the pre-switch context; the recorded value at the switch
    must be that step's endpoint.  Any state reset or premature graph
    change at the switch would show up here.
    """
    worst = 0.0
    for t_switch in trace.switch_times:
        k = trace.index_of(t_switch)
        if k == 0:
            continue
        replayed = replay_step(trace, runtime, k - 1)
        worst = max(worst, float(np.abs(replayed[:, 4:6] - trace.z[k]).max()))
    return worst


def invariant_checks(trace: SignalTrace, runtime: ScenarioRuntime):
    """The always-on run invariants: finite state, dissipation, z continuity."""
    finite = all(
        np.isfinite(arr).all() for arr in (trace.q, trace.qd, trace.z, trace.theta_hat)
    )
    checks = [CheckResult("finite_state", finite, "all recorded samples finite" if finite else "nonfinite sample")]
    violation = lyapunov_violation(trace)
    checks.append(
        CheckResult("lyapunov_per_step", violation <= 0.0, f"max_violation={_fmt(violation)}")
    )
    jump = z_switch_jump(trace, runtime)
    checks.append(CheckResult("z_continuity", jump <= Z_JUMP_TOL, f"max_jump={_fmt(jump)}"))
    return checks


def stabilization_checks(cfg: ScenarioConfig):
    """Doubled-horizon L2 stabilization of the error channels (verify only).

    Reruns the scenario to twice its horizon (a random switching schedule
    extends without reshuffling its prefix) and requires the L2 norms of
    the consecutive-difference xi and q channels and of s to grow by less
    than 1 % when the second half is appended.
    """
    doubled = run_scenario(runtime_from_config(replace(cfg, horizon=2.0 * cfg.horizon)))
    checks = []
    for label, series in (
        ("xi_diff", np.diff(doubled.xi, axis=1)),
        ("q_diff", np.diff(doubled.q, axis=1)),
        ("s", doubled.s),
    ):
        growth = analysis.lp_growth(series, doubled.step, p=2)
        checks.append(
            CheckResult(
                f"l2_stabilized_{label}", growth < 0.01, f"relative_growth={_fmt(growth)}"
            )
        )
    return checks


def graph_checks(cfg: ScenarioConfig):
    """Structural facts about the configured graph set."""
    members = graphs_from_config(cfg)
    union = union_graphs(members)
    has_tree, roots = has_spanning_tree(union)
    checks = [
        CheckResult(
            "union_spanning_tree",
            has_tree,
            f"roots={[r + 1 for r in roots]}" if has_tree else "union has no spanning tree",
        )
    ]
    worst = 0.0
    for g in members:
        lap = laplacian(g)
        worst = max(worst, float(np.abs(lap.sum(axis=1)).max()))
    checks.append(CheckResult("laplacian_rows", worst <= 1e-12, f"max_row_sum={_fmt(worst)}"))
    return checks


def _writable_dir(out_dir: Path):
    """Fail fast, before any simulation, if the output directory is unusable."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError("outputs.dir", f"not writable: {exc}") from None


def _agents_csv(trace: SignalTrace) -> str:
    lines = [AGENTS_HEADER]
    count, n, _ = trace.q.shape
    for k in range(count):
        t = _fmt(trace.times[k])
        for i in range(n):
            cells = [
                t,
                str(i + 1),
                _fmt(trace.q[k, i, 0]),
                _fmt(trace.q[k, i, 1]),
                _fmt(trace.qd[k, i, 0]),
                _fmt(trace.qd[k, i, 1]),
                _fmt(trace.z[k, i, 0]),
                _fmt(trace.z[k, i, 1]),
                _fmt(trace.s[k, i, 0]),
                _fmt(trace.s[k, i, 1]),
                _fmt(trace.theta_hat[k, i, 0]),
                _fmt(trace.theta_hat[k, i, 1]),
                _fmt(trace.theta_hat[k, i, 2]),
                _fmt(trace.tau[k, i, 0]),
                _fmt(trace.tau[k, i, 1]),
            ]
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _metrics_csv(trace: SignalTrace) -> str:
    lines = [METRICS_HEADER]
    for k in range(trace.sample_count):
        lines.append(
            ",".join(
                [
                    _fmt(trace.times[k]),
                    _fmt(trace.consensus_err[k]),
                    _fmt(trace.max_speed[k]),
                    _fmt(trace.v_total[k]),
                    _fmt(trace.vstar[k, 0]),
                    _fmt(trace.vstar[k, 1]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _summary_text(trace: SignalTrace, checks) -> str:
    last = trace.sample_count - 1
    lines = [
        f"samples: {trace.sample_count}",
        f"final_time: {_fmt(trace.times[last])}",
        f"final_consensus_error: {_fmt(trace.consensus_err[last])}",
        f"final_max_speed: {_fmt(trace.max_speed[last])}",
        f"final_V_total: {_fmt(trace.v_total[last])}",
        f"runtime_seconds: {trace.runtime_seconds:.3f}",
    ]
    lines += [c.line() for c in checks]
    return "\n".join(lines) + "\n"


def emit_outputs(trace: SignalTrace, out_dir, checks=()) -> dict:
    """Write agents.csv, metrics.csv and summary.txt into `out_dir`."""
    out_dir = Path(out_dir)
    _writable_dir(out_dir)
    paths = {
        "agents": out_dir / "agents.csv",
        "metrics": out_dir / "metrics.csv",
        "summary": out_dir / "summary.txt",
    }
    paths["agents"].write_text(_agents_csv(trace), encoding="utf-8", newline="\n")
    paths["metrics"].write_text(_metrics_csv(trace), encoding="utf-8", newline="\n")
    paths["summary"].write_text(_summary_text(trace, checks), encoding="utf-8", newline="\n")
    return paths


def _resolve_out_dir(cfg: ScenarioConfig, override) -> Path:
    if override:
        return Path(override)
    env = os.environ.get(ENV_OUTDIR)
    if env:
        return Path(env)
    return Path(cfg.out_dir)


def lab_reports(cfg: ScenarioConfig | None = None):
    """The standing lab experiments; see `lagconsensus lab`.

    (a) constant scalar decay recovers its exact rate; (b) alternating
    stable scalars earn a certificate and satisfy the integral-L2 bound
    under a derivative input; (c) the scheduled difference system of the
    scenario graph set earns a certificate, while a union-disconnected
    set must not.
    """
    cfg = cfg or scenario_a()
    step = cfg.step
    reports = []

    const = analysis.constant_system([[-1.0]])
    fit = analysis.decay_fit(const, [0.0], horizon=6.0, step=step)
    reports.append(
        analysis.StabilityReport(
            name="constant_decay",
            passed=fit.certified and abs(fit.l2 - 1.0) <= 0.02 and abs(fit.l1 - 1.0) <= 0.02,
            values={"l1": fit.l1, "l2": fit.l2, "residual": fit.residual},
        )
    )

    switching = analysis.alternating_system([[[-1.0]], [[-3.0]]], dwell=0.1)
    fit = analysis.decay_fit(switching, [0.0, 0.2, 0.4], horizon=4.0, step=step)
    decay_ok = fit.certified and 1.0 <= fit.l2 <= 3.0
    reports.append(
        analysis.StabilityReport(
            name="switching_decay",
            passed=decay_ok,
            values={"l1": fit.l1, "l2": fit.l2, "residual": fit.residual},
        )
    )
    report = analysis.integral_lp_check(
        switching,
        u=lambda t: np.array([math.exp(-t) * (5.0 * math.cos(5.0 * t) - math.sin(5.0 * t))]),
        p=2,
        horizon=20.0,
        step=step,
        fit=fit,
        u_integral=lambda t: np.array([math.exp(-t) * math.sin(5.0 * t)]),
        name="switching_integral_l2",
    )
    reports.append(report)

    members = graphs_from_config(cfg)
    schedule = generate_schedule(members, cfg.period, 10.0, cfg.seed)
    system = analysis.schedule_difference_system(schedule)
    fit = analysis.decay_fit(system, [0.0, 2.0, 4.0], horizon=6.0, step=step)
    reports.append(
        analysis.StabilityReport(
            name="scenario_difference_decay",
            passed=fit.certified,
            values={"l1": fit.l1, "l2": fit.l2, "residual": fit.residual},
        )
    )

    # Control experiment: two disjoint 3-cycles never mix information
    # across the halves, so no decay certificate may be earned.
    halves = [
        DirectedGraph.from_edges(6, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]),
        DirectedGraph.from_edges(6, [(3, 4, 1.0), (4, 5, 1.0), (5, 3, 1.0)]),
    ]
    split = generate_schedule(halves, cfg.period, 10.0, cfg.seed)
    fit = analysis.decay_fit(
        analysis.schedule_difference_system(split), [0.0, 2.0, 4.0], horizon=6.0, step=step
    )
    reports.append(
        analysis.StabilityReport(
            name="disconnected_no_certificate",
            passed=not fit.certified,
            values={"l1": fit.l1, "l2": fit.l2, "residual": fit.residual},
        )
    )

    return reports


def _print_reports(reports, summary_path: Path | None):
    ok = True
    lines = []
    for rep in reports:
        ok = ok and rep.passed
        for line in rep.lines():
            print(line)
            lines.append(line)
    if summary_path is not None:
        with summary_path.open("a", encoding="utf-8") as fh:
            for rep in reports:
                fh.write(rep.row() + "\n")
    return ok


def _load(args) -> ScenarioConfig:
    return load_config(args.config)


def cmd_run(args) -> int:
    cfg = _load(args)
    out_dir = _resolve_out_dir(cfg, args.outdir)
    _writable_dir(out_dir)
    runtime = runtime_from_config(cfg)
    trace = run_scenario(runtime)
    checks = invariant_checks(trace, runtime)
    paths = emit_outputs(trace, out_dir, checks)
    print(f"wrote {paths['agents']}, {paths['metrics']}, {paths['summary']}")
    print(f"final consensus error: {_fmt(trace.consensus_err[-1])}")
    return 0 if all(c.passed for c in checks) else 1


def cmd_verify(args) -> int:
    cfg = _load(args)
    out_dir = _resolve_out_dir(cfg, args.outdir)
    _writable_dir(out_dir)
    runtime = runtime_from_config(cfg)
    trace = run_scenario(runtime)
    checks = graph_checks(cfg)
    checks += invariant_checks(trace, runtime)
    checks += stabilization_checks(cfg)
    emit_outputs(trace, out_dir, checks)
    for check in checks:
        print(check.line())
    return 0 if all(c.passed for c in checks) else 1


def cmd_lab(args) -> int:
    cfg = load_config(args.config) if args.config else scenario_a()
    summary_path = None
    out_override = args.outdir or os.environ.get(ENV_OUTDIR)
    if out_override:
        out_dir = Path(out_override)
        _writable_dir(out_dir)
        summary_path = out_dir / "summary.txt"
    ok = _print_reports(lab_reports(cfg), summary_path)
    return 0 if ok else 1


def cmd_schedule(args) -> int:
    cfg = _load(args)
    runtime = runtime_from_config(cfg)
    sched = runtime.schedule
    for t, idx in zip(sched.times, sched.indices):
        print(f"t={t:.3f} graph={int(idx) + 1}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lagconsensus",
        description="Simulate and check consensus of networked two-link arms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write CSV outputs")
    p_run.add_argument("config")
    p_run.add_argument("--outdir", help="override the output directory")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run a scenario and assert all invariants")
    p_verify.add_argument("config")
    p_verify.add_argument("--outdir")
    p_verify.set_defaults(func=cmd_verify)

    p_lab = sub.add_parser("lab", help="run the stability lab experiments")
    p_lab.add_argument("config", nargs="?")
    p_lab.add_argument("--outdir")
    p_lab.set_defaults(func=cmd_lab)

    p_sched = sub.add_parser("schedule", help="print the switching schedule of a config")
    p_sched.add_argument("config")
    p_sched.set_defaults(func=cmd_schedule)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SimulationDiverged as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        # Downstream consumer (head, less) closed stdout; leave quietly.
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
