"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 numerical-invariant
failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import NumericalInvariantError, ValidationError
from .geodesic import build_geodesic, eval_geodesic
from .ot import w2_distance
from .scenario import (
    emit_plot_data,
    emit_trajectory,
    load_cloud,
    load_scenario,
    run_scenario,
    verify_scenario,
    write_report,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

_SUBCOMMAND_MODE = {
    "plan": "plan",
    "simulate": "closed_loop",
    "oracle": "oracle",
    "mpc": "mpc",
}

logger = logging.getLogger("w2swarm")


def _scenario_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--alpha", type=float, help="override the motion-cost weight")
    p.add_argument("--horizon", type=float, help="override the time horizon")
    p.add_argument("--steps", type=int, help="override the number of time steps")
    p.add_argument("--seed", type=int, help="override the sampler seed")
    p.add_argument("--out-dir", default=".", help="directory for emitted files (default: .)")
    p.add_argument(
        "--emit-plot-data",
        action="store_true",
        help="also write cost-vs-time and W2-vs-time series",
    )
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="w2swarm",
        description="Optimal swarm tracking in 2-Wasserstein space",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("distance", help="W2 distance between two cloud files")
    d.add_argument("cloud_a")
    d.add_argument("cloud_b")

    g = sub.add_parser("geodesic", help="point on the W2 geodesic between two clouds")
    g.add_argument("cloud_a")
    g.add_argument("cloud_b")
    g.add_argument("--t", type=float, default=0.5, help="geodesic parameter in [0, 1]")

    flags = _scenario_flags()
    for name, help_text in (
        ("plan", "open-loop optimal trajectory"),
        ("simulate", "closed-loop feedback simulation"),
        ("oracle", "direct-transcription oracle"),
        ("mpc", "receding-horizon tracking of piecewise demand"),
        ("verify", "run the invariant suite on a scenario"),
    ):
        sp = sub.add_parser(name, help=help_text, parents=[flags])
        sp.add_argument("scenario")
    return parser


def _overrides(args) -> dict:
    return {
        "alpha": args.alpha,
        "horizon": args.horizon,
        "steps": args.steps,
        "seed": args.seed,
    }


def _run(args) -> int:
    if args.command == "distance":
        a, b = load_cloud(args.cloud_a), load_cloud(args.cloud_b)
        print(repr(w2_distance(a, b)))
        return EXIT_OK
    if args.command == "geodesic":
        a, b = load_cloud(args.cloud_a), load_cloud(args.cloud_b)
        cloud = eval_geodesic(build_geodesic(a, b), args.t)
        json.dump(
            {"points": cloud.points.tolist(), "weights": cloud.weights.tolist()},
            sys.stdout,
        )
        sys.stdout.write("\n")
        return EXIT_OK

    overrides = _overrides(args)
    if args.command in _SUBCOMMAND_MODE:
        overrides["mode"] = _SUBCOMMAND_MODE[args.command]
    sc = load_scenario(args.scenario, overrides)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.command == "verify":
        checks = verify_scenario(sc)
        for c in checks:
            print(c.line())
        return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERICAL

    traj, report = run_scenario(sc)
    emit_trajectory(traj, out_dir / f"{sc.name}_{sc.mode}.csv")
    if args.emit_plot_data:
        emit_plot_data(traj, out_dir, f"{sc.name}_{sc.mode}")
    write_report(report, out_dir)
    for key in sorted(report.cost):
        print(f"{key}: {report.cost[key]!r}")
    for c in report.checks:
        print(c.line())
    return EXIT_OK if report.ok else EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalInvariantError as exc:
        print(f"numerical invariant failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
