"""Table parsing and figure assembly against handwritten CSVs."""

from pathlib import Path

import pytest

from lagplots.figspec import FigureSpec, MissingChannel, SpecError
from lagplots.render import build_figure, load_table, render

# The simulator's documented layouts, copied here on purpose: this package
# must keep working from the files alone.
AGENTS_HEADER = "t,agent,q1,q2,qd1,qd2,z1,z2,s1,s2,th1,th2,th3,tau1,tau2"
METRICS_HEADER = "t,consensus_err,max_speed,V_total,Vstar_1,Vstar_2"


def agents_csv(tmp_path, name="agents.csv", rows=3, agents=2):
    lines = [AGENTS_HEADER]
    for k in range(rows):
        for i in range(1, agents + 1):
            cells = [k * 0.005, i] + [0.1 * i + 0.01 * k * j for j in range(13)]
            lines.append(",".join(f"{c:.9e}" if n != 1 else str(i) for n, c in enumerate(cells)))
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def metrics_csv(tmp_path, name="metrics.csv", rows=4):
    lines = [METRICS_HEADER]
    for k in range(rows):
        lines.append(",".join(f"{v:.9e}" for v in [k * 0.005, 2.0 / (k + 1), 0.5, 9.0, 4.0, 3.0]))
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def spec_for(path, channels, out, **extra):
    return FigureSpec(inputs=(Path(path),), channels=tuple(channels), out=Path(out), **extra)


def test_load_table_columns_and_agents(tmp_path):
    table = load_table(agents_csv(tmp_path))
    assert table.header == tuple(AGENTS_HEADER.split(","))
    assert table.rows.shape == (6, 15)
    assert table.agent_ids == (1, 2)
    assert table.column("t")[0] == 0.0

    metrics = load_table(metrics_csv(tmp_path))
    assert metrics.agent_ids == ()
    assert metrics.column("consensus_err")[0] == 2.0


def test_missing_channel_is_a_named_error(tmp_path):
    table = load_table(metrics_csv(tmp_path))
    with pytest.raises(MissingChannel) as err:
        table.column("q9")
    assert err.value.channel == "q9"
    assert "metrics.csv" in str(err.value)
    assert "consensus_err" in str(err.value)


def test_render_checks_channels_before_writing(tmp_path):
    out = tmp_path / "figs" / "bad.svg"
    spec = spec_for(agents_csv(tmp_path), ["q1", "q9"], out)
    with pytest.raises(MissingChannel):
        render(spec)
    assert not out.exists()


def test_agent_tables_get_one_curve_per_agent(tmp_path):
    spec = spec_for(agents_csv(tmp_path), ["q1"], tmp_path / "q1.svg")
    fig = build_figure(spec, [load_table(p) for p in spec.inputs])
    (ax,) = fig.axes
    assert [line.get_label() for line in ax.lines] == ["agent 1", "agent 2"]
    assert all(len(line.get_xdata()) == 3 for line in ax.lines)


def test_plain_tables_get_one_curve_per_channel(tmp_path):
    spec = spec_for(metrics_csv(tmp_path), ["consensus_err", "V_total"], tmp_path / "m.svg")
    fig = build_figure(spec, [load_table(p) for p in spec.inputs])
    (ax,) = fig.axes
    assert [line.get_label() for line in ax.lines] == ["consensus_err", "V_total"]


def test_overlay_prefixes_curves_with_input_labels(tmp_path):
    a = metrics_csv(tmp_path, "a.csv")
    b = metrics_csv(tmp_path, "b.csv")
    spec = FigureSpec(
        inputs=(a, b),
        channels=("consensus_err",),
        out=tmp_path / "overlay.svg",
        labels=("no delay", "delayed"),
    )
    fig = build_figure(spec, [load_table(p) for p in spec.inputs])
    (ax,) = fig.axes
    assert [line.get_label() for line in ax.lines] == [
        "no delay consensus_err",
        "delayed consensus_err",
    ]


def test_empty_table_renders_empty_axes(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(METRICS_HEADER + "\n", encoding="utf-8")
    spec = spec_for(path, ["V_total"], tmp_path / "empty.svg", title="nothing yet")
    fig = build_figure(spec, [load_table(path)])
    assert len(fig.axes[0].lines) == 0
    out = render(spec)
    assert out.read_bytes().startswith(b"<?xml")


def test_render_creates_parent_directories(tmp_path):
    out = tmp_path / "deep" / "nest" / "fig.svg"
    assert render(spec_for(metrics_csv(tmp_path), ["V_total"], out)) == out
    assert out.is_file()


def test_svg_output_is_byte_stable(tmp_path):
    csv = agents_csv(tmp_path)
    first = render(spec_for(csv, ["tau1"], tmp_path / "one.svg", title="torque"))
    second = render(spec_for(csv, ["tau1"], tmp_path / "two.svg", title="torque"))
    assert first.read_bytes() == second.read_bytes()
    assert b"dc:date" not in first.read_bytes()


def test_png_output(tmp_path):
    out = render(spec_for(metrics_csv(tmp_path), ["max_speed"], tmp_path / "m.png"))
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_malformed_tables_name_the_line(tmp_path):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("t,x\n0.0,1.0\n0.005\n", encoding="utf-8")
    with pytest.raises(SpecError) as err:
        load_table(ragged)
    assert err.value.where == f"{ragged}:3"

    junk = tmp_path / "junk.csv"
    junk.write_text("t,x\n0.0,oops\n", encoding="utf-8")
    with pytest.raises(SpecError) as err:
        load_table(junk)
    assert "not numeric" in str(err.value)

    headerless = tmp_path / "blank.csv"
    headerless.write_text("", encoding="utf-8")
    with pytest.raises(SpecError):
        load_table(headerless)
