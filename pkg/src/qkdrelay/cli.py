"""Command-line front end: ``run``, ``sweep``, ``bsm-table`` and ``selftest``.

Exit codes: 0 success, 1 usage or configuration error, 2 protocol abort.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .netsim import SWEEP_PARAMETERS, ConfigError, load_config, run_session, sweep, sweep_to_csv
from .optics import PolarizationState, bsm_distribution, classify

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2
PROB_FLOOR = 1e-12


def _artifact_stem(path: Path) -> str:
    return path.stem + ".out"


def cmd_run(path: str) -> int:
    cfg_path = Path(path)
    try:
        cfg = load_config(cfg_path)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run_session(cfg)
    print(report.summary())
    for p in report.write_csv(cfg_path.parent, _artifact_stem(cfg_path)):
        print(f"wrote {p}")
    return EXIT_ABORT if report.aborted else EXIT_OK


def cmd_sweep(path: str, param: str, values: Sequence[float], workers: int | None = None) -> int:
    cfg_path = Path(path)
    if param not in SWEEP_PARAMETERS:
        print(f"error: --param must be one of {', '.join(SWEEP_PARAMETERS)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(cfg_path)
        reports = sweep(cfg, param, values, workers=workers)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for v, rep in zip(values, reports):
        print(f"--- {param}={v}")
        print(rep.summary())
    out = cfg_path.parent / f"{_artifact_stem(cfg_path)}.sweep-{param}.csv"
    out.write_text(sweep_to_csv(param, values, reports))
    print(f"wrote {out}")
    return EXIT_ABORT if any(r.aborted for r in reports) else EXIT_OK


def bsm_table_lines(visibility: float) -> list[str]:
    lines = [f"# two-photon BSM outcomes, visibility={visibility:g}", "alice\tbob\tpattern\tprobability\toutcome"]
    for a in PolarizationState:
        for b in PolarizationState:
            dist = bsm_distribution(a, b, visibility)
            rows = sorted(
                (str(k), p, classify(k).value) for k, p in dist.probs.items() if p > PROB_FLOOR
            )
            lines.extend(f"{a.value}\t{b.value}\t{pat}\t{p:.6f}\t{out}" for pat, p, out in rows)
    return lines


def cmd_bsm_table(visibility: float) -> int:
    if not 0.0 <= visibility <= 1.0:
        print("error: --visibility must be in [0, 1]", file=sys.stderr)
        return EXIT_CONFIG
    print("\n".join(bsm_table_lines(visibility)))
    return EXIT_OK


def cmd_selftest(scale: float = 0.25) -> int:
    from .acceptance import run_acceptance

    results = run_acceptance(scale=scale, echo=print)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return EXIT_OK if failed == 0 else EXIT_CONFIG


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdrelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario from a JSON config")
    p.add_argument("config")

    p = sub.add_parser("sweep", help="run a scenario over a list of parameter values")
    p.add_argument("config")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, type=_float_list, help="comma-separated, e.g. 0,25,50")
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("bsm-table", help="print the exact BSM outcome table")
    p.add_argument("--visibility", type=float, default=1.0)

    p = sub.add_parser("selftest", help="run the acceptance criteria at reduced round counts")
    p.add_argument("--scale", type=float, default=0.25)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.param, args.values, args.workers)
    if args.command == "bsm-table":
        return cmd_bsm_table(args.visibility)
    return cmd_selftest(args.scale)


if __name__ == "__main__":
    sys.exit(main())
