"""Figure descriptions: which CSVs to read, which channels, where to write.

A figure list is a YAML file with one key, `figures`, holding a list of
mappings. Each mapping names its input CSV(s), the channels to draw, and
the output image path; titles and axis labels are optional. Relative
paths resolve against the working directory, same as the simulator CLI.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

__all__ = ["FigureSpec", "MissingChannel", "SpecError", "load_specs"]

IMAGE_SUFFIXES = (".svg", ".png")


class SpecError(ValueError):
    """A figure list that cannot be rendered as written."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


class MissingChannel(LookupError):
    """A requested channel is absent from a CSV header."""

    def __init__(self, channel, csv_path, header):
        self.channel = str(channel)
        self.csv_path = Path(csv_path)
        super().__init__(
            f"channel {self.channel!r} not in {csv_path} (header: {', '.join(header)})"
        )

    def __str__(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class FigureSpec:
    """One figure: a curve per channel, per input, per agent if grouped.

    `labels` names the inputs in curve legends and defaults to the file
    stems; it only shows up when a figure overlays several CSVs.
    """

    inputs: tuple[Path, ...]
    channels: tuple[str, ...]
    out: Path
    labels: tuple[str, ...] = ()
    title: str = ""
    xlabel: str = "t [s]"
    ylabel: str = ""

    def __post_init__(self):
        if not self.labels:
            object.__setattr__(self, "labels", tuple(p.stem for p in self.inputs))


def _string(mapping, key, where, default=""):
    value = mapping.get(key, default)
    if not isinstance(value, str):
        raise SpecError(f"{where}.{key}", "expected a string")
    return value


def _string_list(value, where):
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not value:
        raise SpecError(where, "expected a nonempty list of strings")
    if not all(isinstance(item, str) and item for item in value):
        raise SpecError(where, "expected a nonempty list of strings")
    return value


def figure_from_mapping(mapping, where: str) -> FigureSpec:
    if not isinstance(mapping, dict):
        raise SpecError(where, "each figure must be a mapping")
    known = {"input", "inputs", "channels", "out", "labels", "title", "xlabel", "ylabel"}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise SpecError(where, f"unknown keys {unknown}")

    if ("input" in mapping) == ("inputs" in mapping):
        raise SpecError(where, "give exactly one of `input` or `inputs`")
    raw_inputs = mapping.get("input", mapping.get("inputs"))
    inputs = tuple(Path(p) for p in _string_list(raw_inputs, f"{where}.inputs"))

    channels = tuple(_string_list(mapping.get("channels"), f"{where}.channels"))

    out_text = mapping.get("out")
    if not isinstance(out_text, str) or not out_text:
        raise SpecError(f"{where}.out", "expected an output image path")
    out = Path(out_text)
    if out.suffix.lower() not in IMAGE_SUFFIXES:
        raise SpecError(f"{where}.out", f"output must end in one of {IMAGE_SUFFIXES}")

    labels: tuple[str, ...] = ()
    if "labels" in mapping:
        labels = tuple(_string_list(mapping["labels"], f"{where}.labels"))
        if len(labels) != len(inputs):
            raise SpecError(
                f"{where}.labels", f"{len(labels)} labels for {len(inputs)} inputs"
            )

    return FigureSpec(
        inputs=inputs,
        channels=channels,
        out=out,
        labels=labels,
        title=_string(mapping, "title", where),
        xlabel=_string(mapping, "xlabel", where, default="t [s]"),
        ylabel=_string(mapping, "ylabel", where),
    )


def load_specs(path) -> list[FigureSpec]:
    """Parse a figure list file into validated FigureSpec values."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecError(str(path), f"not valid YAML ({exc})") from exc
    if not isinstance(doc, dict):
        raise SpecError(str(path), "top level must be a mapping with a `figures` list")
    unknown = sorted(set(doc) - {"figures"})
    if unknown:
        raise SpecError(str(path), f"unknown keys {unknown}")
    figures = doc.get("figures")
    if not isinstance(figures, list) or not figures:
        raise SpecError(str(path), "`figures` must be a nonempty list")
    return [figure_from_mapping(item, f"figures[{i}]") for i, item in enumerate(figures)]
