"""Command line: ``run <config>``, ``verify <level>``, ``report <results-dir>``.

Exit codes: 0 success, 1 a cell or criterion failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items) -> dict[int, dict]:
    """``["1.tol=0", "6.n_list=[2,4]"]`` -> ``{1: {"tol": 0}, 6: {"n_list": [2, 4]}}``."""
    out: dict[int, dict] = {}
    for item in items or ():
        lhs, sep, rhs = item.partition("=")
        num, dot, name = lhs.partition(".")
        if not sep or not dot or not num.isdigit() or not name:
            raise ValueError(f"override {item!r} is not of the form N.name=value")
        val = _parse_value(rhs)
        out.setdefault(int(num), {})[name] = tuple(val) if isinstance(val, list) else val
    return out


def cmd_run(args) -> int:
    from .runner import run_experiment

    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error at {err.path}: {err.message}", file=sys.stderr)
        return 2
    try:
        outcome = run_experiment(cfg, args.out, args.workers)
    except FileExistsError as err:
        print(str(err), file=sys.stderr)
        return 2
    s = outcome.summary
    print(f"{cfg.name}: {outcome.computed} cells computed, {outcome.skipped} reused, {outcome.failed_cells} failed")
    print(f"status {s['status']}; results in {outcome.outdir}")
    for c in s.get("convergence", []):
        slope = c.get("slope")
        print(f"  L={c['reservoir_sites']} T={c['T_wait']}: slope {'n/a' if slope is None else f'{slope:.3f}'} ({c['status']})")
    return outcome.exit_code


def cmd_verify(args) -> int:
    from .acceptance import verify_suite

    try:
        overrides = parse_overrides(args.set)
    except ValueError as err:
        print(str(err), file=sys.stderr)
        return 2
    only = {int(x) for x in args.only.split(",")} if args.only else None
    report = verify_suite(args.level, overrides, only, echo=print)
    if args.json:
        Path(args.json).write_text(json.dumps(report.as_dict(), indent=2, default=float) + "\n")
    n_ok = sum(r.passed for r in report.results)
    print(f"{n_ok}/{len(report.results)} criteria passed in {report.seconds:.1f}s")
    return 0 if report.passed else 1


def cmd_report(args) -> int:
    d = Path(args.results_dir)
    try:
        summary = json.loads((d / "summary.json").read_text())
        rows = list(csv.DictReader((d / "results.csv").open()))
    except (OSError, json.JSONDecodeError) as err:
        print(f"cannot read results in {d}: {err}", file=sys.stderr)
        return 2
    print(f"{summary['name']} [{summary['protocol']}] config {summary['config_hash'][:12]}  status {summary['status']}")
    head = f"{'L':>5} {'N':>4} {'T':>8} {'beta Q':>11} {'dS':>9} {'sum D':>9} {'residual':>10} {'budget':>10}  status"
    print(head)
    for g in summary["groups"]:
        if "beta_q" not in g:
            print(f"{g['reservoir_sites']:>5} {g['N_steps']:>4} {g['T_wait']:>8.3g}  failed: {'; '.join(map(str, g.get('errors', [])))}")
            continue
        print(
            f"{g['reservoir_sites']:>5} {g['N_steps']:>4} {g['T_wait']:>8.3g} {g['beta_q']:>11.6f} {g['delta_s']:>9.5f} "
            f"{sum(g['deficits']):>9.5f} {g['residual']:>10.2e} {g['budget']:>10.2e}  {g['status']}"
        )
        for w in g.get("warnings", []):
            print(f"{'':>20}note: {w}")
    for c in summary.get("convergence", []):
        if c.get("slope") is not None:
            print(f"convergence L={c['reservoir_sites']} T={c['T_wait']}: slope {c['slope']:.3f} in {c['slope_band']} -> {c['status']}")
        else:
            print(f"convergence L={c['reservoir_sites']} T={c['T_wait']}: {c.get('detail', c['status'])}")
    print(f"{len(rows)} CSV rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qclausius", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the sweep described by a TOML config")
    r.add_argument("config")
    r.add_argument("--out", help="results directory (default: output.directory of the config)")
    r.add_argument("--workers", type=int, help="worker processes (env QCLAUSIUS_WORKERS also works)")
    r.set_defaults(fn=cmd_run)
    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("level", choices=("fast", "full"))
    v.add_argument("--set", action="append", metavar="N.name=value", help="override a criterion parameter")
    v.add_argument("--only", help="comma-separated criterion numbers")
    v.add_argument("--json", help="write the machine-readable report here")
    v.set_defaults(fn=cmd_verify)
    rep = sub.add_parser("report", help="summarize a results directory")
    rep.add_argument("results_dir")
    rep.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
