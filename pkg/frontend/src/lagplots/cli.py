"""Entry point: render every figure in a YAML figure list.

Exit codes follow the simulator CLI convention: 0 when every figure is
written, 2 for anything wrong with the figure list or its input CSVs.
"""

from __future__ import annotations

import argparse
import os
import sys

from .figspec import MissingChannel, SpecError, load_specs
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render figures from consensus simulation CSV outputs.",
    )
    parser.add_argument("specfile", help="YAML figure list, see README")
    args = parser.parse_args(argv)
    try:
        for spec in load_specs(args.specfile):
            print(f"wrote {render(spec)}")
    except (SpecError, MissingChannel) as exc:
        print(f"figure error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"figure error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # Downstream consumer closed stdout; leave quietly.
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
