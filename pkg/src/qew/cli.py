"""``qew`` command line: run scenario files and parameter sweeps.

Exit codes: 0 pass, 1 a check failed, 2 parse/schema/domain error,
3 hypotheses violated, 4 numerical or I/O failure. Errors print one line to
stderr: ``qew: error kind=<kind> exit=<code> reason=<json string>``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DomainError, HypothesisViolated, NumericalError
from .report import Check, VerificationReport, atomic_write, emit_report
from .scenarios import Scenario, load, run_scenario, tolerance_override

EXIT_PASS, EXIT_CHECK, EXIT_SCHEMA, EXIT_HYPOTHESIS, EXIT_NUMERICAL = 0, 1, 2, 3, 4

_TAXONOMY = [
    (ConfigError, "schema", EXIT_SCHEMA),
    (DomainError, "domain", EXIT_SCHEMA),
    (ContractError, "contract", EXIT_SCHEMA),
    (HypothesisViolated, "hypothesis-violated", EXIT_HYPOTHESIS),
    (NumericalError, "numerical", EXIT_NUMERICAL),
    (OSError, "io", EXIT_NUMERICAL),
]


def classify_error(exc: BaseException) -> tuple[str, int] | None:
    for cls, kind, code in _TAXONOMY:
        if isinstance(exc, cls):
            return kind, code
    return None


def parse_range(text: str) -> np.ndarray:
    """``a:b:steps`` with inclusive ends."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--range: expected a:b:steps, got {text!r}")
    try:
        a, b, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"--range: cannot parse {text!r}") from None
    if steps < 1 or not (np.isfinite(a) and np.isfinite(b)):
        raise ConfigError("--range: need finite ends and steps >= 1")
    return np.linspace(a, b, steps)


def _write_report(report: VerificationReport, fmt: str, out: str | None) -> bytes:
    data = emit_report(report, fmt)
    if out is not None:
        suffix = "txt" if fmt == "text" else "jsonl"
        atomic_write(Path(out) / f"{report.scenario}.{suffix}", data)
    return data


def _run_one(args) -> VerificationReport:
    sc, out, tol = args
    return run_scenario(sc, out, tol)


def cmd_run(args) -> int:
    sc = load(args.config)
    tol = tolerance_override(os.environ)
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    report = run_scenario(sc, args.out, tol)
    sys.stdout.buffer.write(_write_report(report, args.format, args.out))
    sys.stdout.flush()
    return EXIT_PASS if report.overall else EXIT_CHECK


def cmd_sweep(args) -> int:
    sc = load(args.config)
    tol = tolerance_override(os.environ)
    values = parse_range(args.range)
    runs = [sc.with_param(args.param, float(v)) for v in values]
    # per-run CSVs would overwrite each other
    runs = [Scenario(r.name, r.kind, {**r.params, "csv": None}) if "csv" in r.params else r for r in runs]
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    jobs = [(r, args.out, tol) for r in runs]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            reports = list(pool.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    merged = VerificationReport(f"{sc.name}-sweep", sc.kind)
    for v, rep in zip(values, reports):
        tag = f"{args.param}={v:.6g}"
        merged.extend(Check(f"{tag}:{c.name}", c.value, c.tol, c.passed) for c in rep.checks)
        merged.notes.extend(f"{tag}: {n}" for n in rep.notes)
    sys.stdout.buffer.write(_write_report(merged, args.format, args.out))
    sys.stdout.flush()
    return EXIT_PASS if merged.overall else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qew", description="Quasi-Einstein verification workbench")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario file")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="directory for report and CSV artifacts")
    run.add_argument("--format", choices=("text", "jsonl"), default="text")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run a scenario over a range of one parameter")
    sw.add_argument("config")
    sw.add_argument("--param", default="shoot_param")
    sw.add_argument("--range", required=True, help="a:b:steps, ends included")
    sw.add_argument("--out", default=None)
    sw.add_argument("--format", choices=("text", "jsonl"), default="text")
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_SCHEMA if exc.code else EXIT_PASS
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to the exit taxonomy below
        hit = classify_error(exc)
        if hit is None:
            raise
        kind, code = hit
        print(f"qew: error kind={kind} exit={code} reason={json.dumps(str(exc))}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
