"""Command line entry point: ``gradflow run config.json`` and ``gradflow list [--json]``.

Exit codes: 0 when every check passes, 1 when a check fails or a module
raises, 2 for usage and config errors.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import GradflowError, InputError
from .io import write_csv, write_json
from .scenarios import ScenarioConfig, catalog, run

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gradflow", description="Run gradient-flow scenarios and write CSV/JSON artifacts.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run a scenario from a JSON config")
    r.add_argument("config", help="path to the JSON config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $GRADFLOW_THREADS or 1)")
    r.add_argument("--seed", type=int, default=None, help="seed (overrides the config)")
    ls = sub.add_parser("list", help="list built-in scenarios")
    ls.add_argument("--json", action="store_true", help="machine-readable catalog")
    return p


def list_scenarios(as_json: bool = False) -> str:
    cat = catalog()
    if as_json:
        return json.dumps(cat, indent=2)
    width = max(len(c["name"]) for c in cat)
    lines = [f"{c['name']:<{width}}  {c['description']}\n{'':<{width}}  fields: {', '.join(c['fields'])}"
             for c in cat]
    return "\n".join(lines)


def _threads(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("GRADFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"GRADFLOW_THREADS must be an integer, got {env!r}")
    return 1


def _versions() -> dict:
    return {"gradflow": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run_scenario(cfg: ScenarioConfig, out_dir, threads: int = 1) -> int:
    """Run ``cfg``, write artifacts into ``out_dir`` and return the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    summary: dict = {"scenario": cfg.scenario, "seed": cfg.seed}
    status = EXIT_OK
    try:
        outcome = run(cfg, threads)
    except GradflowError as exc:
        summary.update(status="error", passed=False,
                       error={"type": type(exc).__name__, "message": str(exc)}, checks={})
        status = EXIT_CHECK
    except Exception as exc:  # a bug must still leave a structured record
        summary.update(status="error", passed=False,
                       error={"type": type(exc).__name__, "message": str(exc),
                              "traceback": traceback.format_exc()}, checks={})
        status = EXIT_CHECK
    else:
        for name, (header, rows) in sorted(outcome.tables.items()):
            write_csv(out / f"{name}.csv", header, rows)
        summary.update(
            status="ok" if outcome.passed else "check-failed",
            passed=outcome.passed,
            checks={c.name: {"passed": bool(c.passed), "value": c.value, "bound": c.bound, "detail": c.detail}
                    for c in outcome.checks},
            results=outcome.summary,
            tables=sorted(f"{n}.csv" for n in outcome.tables),
        )
        status = EXIT_OK if outcome.passed else EXIT_CHECK
    write_json(out / "summary.json", summary)
    write_json(out / "manifest.json", {
        "config": cfg.to_dict(), "threads": threads, "versions": _versions(),
        "started": started, "wall_time_s": time.perf_counter() - t0,
    })
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print(list_scenarios(args.json))
        return EXIT_OK
    try:
        raw = json.loads(Path(args.config).read_text())
        if isinstance(raw, dict):
            if args.seed is not None:
                raw["seed"] = args.seed
            if args.out is not None:
                raw["output"] = args.out
        cfg = ScenarioConfig.from_dict(raw)
        threads = _threads(args.threads)
    except (OSError, ValueError, TypeError, InputError) as exc:
        print(f"gradflow: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = cfg.output or f"gradflow-{cfg.scenario}"
    try:
        status = run_scenario(cfg, out_dir, threads)
    except InputError as exc:
        print(f"gradflow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    summary = json.loads((Path(out_dir) / "summary.json").read_text())
    for name, c in summary.get("checks", {}).items():
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}")
    if "error" in summary:
        print(f"ERROR {summary['error']['type']}: {summary['error']['message']}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
