"""Command line front-end: ``biham3d construct|obstruct|converge <scenario.json>``.

Exit codes: 0 every check passed, 1 a tolerance failed, 2 a module error
(invalid scenario, vanishing field, truncated tube, degenerate mesh, ...).
"""

from __future__ import annotations

import argparse
import sys

from .errors import Biham3dError
from .report import EXIT_ERROR, Report
from .scenario import load_scenario


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="biham3d", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="scenario JSON file")
    common.add_argument("--json", action="store_true", help="print the full report as one JSON document")
    common.add_argument("--tolerance-scale", type=float, default=1.0, metavar="F",
                        help="multiply every upper-bound tolerance by F")
    c = sub.add_parser("construct", parents=[common], help="build the Poisson pair and check every identity")
    c.add_argument("--dump-samples", metavar="DIR", help="write tube and pair samples as CSV into DIR")
    sub.add_parser("obstruct", parents=[common], help="Chern number and torus Xi-integral probes")
    v = sub.add_parser("converge", parents=[common], help="residuals under joint refinement")
    v.add_argument("--levels", type=int, default=None, metavar="N", help="number of refinement levels")
    return p


def run(args) -> Report:
    from .pipeline import run_construct, run_convergence, run_obstruct

    scenario = load_scenario(args.scenario)
    if args.command == "construct":
        return run_construct(scenario, args.tolerance_scale, args.dump_samples)
    if args.command == "obstruct":
        return run_obstruct(scenario, args.tolerance_scale)
    return run_convergence(scenario, args.levels, args.tolerance_scale)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if not args.tolerance_scale > 0:
        print("error: --tolerance-scale must be > 0", file=sys.stderr)
        return EXIT_ERROR
    try:
        report = run(args)
    except Biham3dError as exc:
        # the scenario itself could not be loaded: no configuration to embed
        if args.json:
            import json

            print(json.dumps({"command": args.command, "verdict": "error", "exit_code": EXIT_ERROR,
                              "error": {"type": type(exc).__name__, "message": str(exc)}}, indent=2))
        else:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.json:
        print(report.to_json())
    else:
        print("\n".join(report.summary_lines()))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
