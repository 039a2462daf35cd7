"""Command line: run, validate, list-groups, list-measures.

Exit status of ``run``: 0 all acceptance checks pass, 1 some check failed,
2 invalid config, 3 resource budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import BudgetExceeded, UsageError
from .experiments import RUNNERS, Context
from .groups import GROUP_KEYS, get_group

ENV_THREADS = "STABLEWALK_THREADS"
EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3
CONFIG_DIR = Path(__file__).parent / "configs"


@dataclass
class RunManifest:
    config_hash: str
    kind: str
    status: str
    wall_seconds: float
    certified: dict
    checks: list
    files: list
    provenance: dict

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    return str(x)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba", "pyyaml"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    try:
        out["stablewalk"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["stablewalk"] = None
    return out


def run(cfg: cfgmod.ExperimentConfig, *, threads: int | None = None,
        mem_mb: float | None = None, log=print) -> tuple[int, RunManifest | None]:
    diags = cfgmod.validate(cfg)
    if diags:
        for d in diags:
            log(f"invalid: {d}")
        return EXIT_INVALID, None
    threads = threads or int(os.environ.get(ENV_THREADS, "1"))
    mem = mem_mb or (cfg.get("budget") or {}).get("memory_mb")
    ctx = Context(get_group(str(cfg["group"])), cfg.get("seed"), threads,
                  int(mem * 2**20) if mem else None)
    out_dir = Path((cfg.get("output") or {}).get("dir") or f"runs/{cfg.get('name', cfg.kind)}")
    t0 = time.perf_counter()
    try:
        outcome = RUNNERS[cfg.kind](cfg, ctx)
        status = "ok"
    except BudgetExceeded as exc:
        log(f"budget exceeded: {exc}")
        outcome, status = None, "budget-exceeded"
    wall = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    checks = []
    certified = {}
    if outcome is not None:
        max_s = cfg.acceptance.get("max_seconds")
        if max_s is not None:
            outcome.check("runtime", wall <= max_s, f"{wall:.1f} s (limit {max_s} s)")
        for stem, table in outcome.tables.items():
            if isinstance(table, str):
                path = out_dir / f"{stem}.json"
                path.write_text(table + "\n")
            else:
                header, rows = table
                path = out_dir / f"{stem}.csv"
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(header)
                    for r in rows:
                        w.writerow([_fmt(v) for v in r])
            files.append(path.name)
        # deterministic outputs only: timing lives in the manifest
        det_checks = [c for c in outcome.checks if c.name != "runtime"]
        result = {"kind": cfg.kind, "config_hash": cfg.digest(), "results": outcome.results,
                  "checks": [c.__dict__ for c in det_checks]}
        (out_dir / "result.json").write_text(
            json.dumps(result, indent=2, sort_keys=True, default=_jsonable) + "\n")
        files.append("result.json")
        checks = [c.__dict__ for c in outcome.checks]
        certified = outcome.certified
        for c in outcome.checks:
            log(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    manifest = RunManifest(cfg.digest(), cfg.kind, status, round(wall, 3), certified, checks,
                           files, dict(seed=cfg.get("seed"), threads=threads, versions=_versions(),
                                       config_path=cfg.path, plan=cfg.get("plan") or {},
                                       measure=cfg.get("measure") or cfg.get("measures")))
    (out_dir / "manifest.json").write_text(manifest.to_json() + "\n")
    if status == "budget-exceeded":
        return EXIT_BUDGET, manifest
    return (EXIT_OK if all(c["passed"] for c in checks) else EXIT_FAILED), manifest


def _resolve_config(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    canned = CONFIG_DIR / (path if path.endswith(".yaml") else f"{path}.yaml")
    if canned.exists():
        return canned
    raise UsageError(f"config {path!r} not found (also looked in {CONFIG_DIR})")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="stablewalk", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--threads", type=int,
                    help=f"worker count (default ${ENV_THREADS} or 1)")
    ap.add_argument("--out-dir", help="override the output directory")
    ap.add_argument("--budget-mem", type=float, metavar="MB",
                    help="memory budget for convolution buffers")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config", help="YAML path or the name of a bundled config")
    p_val = sub.add_parser("validate", help="list problems with a config")
    p_val.add_argument("config")
    sub.add_parser("list-groups", help="built-in groups")
    sub.add_parser("list-measures", help="measure types and bundled configs")
    args = ap.parse_args(argv)

    if args.cmd == "list-groups":
        for key in GROUP_KEYS:
            print(key)
        return EXIT_OK
    if args.cmd == "list-measures":
        for t in cfgmod.MEASURE_TYPES:
            print(t)
        print("\nbundled configs:")
        for p in sorted(CONFIG_DIR.glob("*.yaml")):
            print(f"  {p.stem}")
        return EXIT_OK
    try:
        path = _resolve_config(args.config)
        cfg = cfgmod.load_config(path, seed=args.seed, out_dir=args.out_dir)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.cmd == "validate":
        diags = cfgmod.validate(cfg)
        for d in diags:
            print(d)
        if not diags:
            print("ok")
        return EXIT_INVALID if diags else EXIT_OK
    code, _ = run(cfg, threads=args.threads, mem_mb=args.budget_mem)
    return code


if __name__ == "__main__":
    sys.exit(main())
