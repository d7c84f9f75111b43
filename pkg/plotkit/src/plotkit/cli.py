"""Command line: `plotkit <figure-id> --in <dir> --out <file> [--agents 1,3,5]`.

Exit codes: 0 on success, 2 for schema or usage problems.
"""

from __future__ import annotations

import argparse
import sys

from .errors import PlotkitError
from .figures import DEFAULT_AGENTS, FIGURES, FigureSpec, render


def _agent_list(text: str) -> tuple:
    try:
        ids = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"agents must be a comma-separated integer list, got {text!r}")
    if not ids:
        raise argparse.ArgumentTypeError("agents list is empty")
    return ids


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="plotkit",
        description="Render figures from an fmsync CSV output directory")
    ap.add_argument("figure_id", choices=sorted(FIGURES))
    ap.add_argument("--in", dest="in_dir", required=True,
                    help="directory holding the fmsync CSV outputs")
    ap.add_argument("--out", dest="out_path", required=True,
                    help="image file to write (format from extension)")
    ap.add_argument("--agents", type=_agent_list, default=DEFAULT_AGENTS,
                    help="comma-separated agent ids (default 1,3,5)")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    spec = FigureSpec(figure_id=args.figure_id, in_dir=args.in_dir,
                      out_path=args.out_path, agents=tuple(args.agents))
    try:
        path = render(spec)
    except PlotkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
