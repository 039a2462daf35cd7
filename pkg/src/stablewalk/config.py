"""Experiment configs: loading, normalization and validation.

A config is one YAML file.  Top-level keys:

    name, kind, group, seed, measure | measures | sampler, plan, params,
    weights, acceptance, budget, output
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import UsageError
from .groups import get_group

KINDS = (
    "return-exponent", "volume-exponent", "pp-scan", "zeta-test", "gjp", "moment-check",
    "walk-exit", "form-compare", "near-diagonal",
    # acceptance suites without a numeric sweep
    "coordinate-identities", "exact-identities", "spectral-oracle",
)
STOCHASTIC = {"walk-exit", "pp-scan", "form-compare", "spectral-oracle", "exact-identities",
              "coordinate-identities"}
MEASURE_TYPES = ("mu_alpha", "coordinatewise", "axis", "simple", "lazy", "delta", "mixture",
                 "symmetrized")
TOP_KEYS = {"name", "kind", "group", "seed", "measure", "measures", "sampler", "plan", "params",
            "weights", "acceptance", "budget", "output", "description"}


@dataclass
class ExperimentConfig:
    raw: dict
    path: str | None = None
    overrides: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.raw[key]

    def get(self, key, default=None):
        return self.raw.get(key, default)

    @property
    def kind(self) -> str:
        return self.raw["kind"]

    @property
    def params(self) -> dict:
        return self.raw.get("params") or {}

    @property
    def acceptance(self) -> dict:
        return self.raw.get("acceptance") or {}

    def digest(self) -> str:
        """sha256 of the canonical JSON form (overrides applied, output location excluded)."""
        body = {k: v for k, v in self.raw.items() if k != "output"}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path, *, seed=None, out_dir=None) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    return from_dict(raw, path=str(path), seed=seed, out_dir=out_dir)


def from_dict(raw: dict, *, path=None, seed=None, out_dir=None) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    over = {}
    if seed is not None:
        raw["seed"] = over["seed"] = int(seed)
    if out_dir is not None:
        raw.setdefault("output", {})
        raw["output"]["dir"] = over["out_dir"] = str(out_dir)
    return ExperimentConfig(raw, path, over)


# -- validation ---------------------------------------------------------------

def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_alpha(diags, where, a):
    if not _is_num(a):
        diags.append(f"{where}: alpha must be a number, got {a!r}")
    elif not 0 < a < 2:
        diags.append(f"{where}: alpha = {a} outside the open interval (0,2)")


def _check_names(diags, where, group, names):
    if group is None:
        return
    if not isinstance(names, (list, tuple)) or not names:
        diags.append(f"{where}: expected a nonempty list of element names")
        return
    known = group.named_elements()
    for n in names:
        base = str(n).strip()
        base = base[:-3] if base.endswith("^-1") else base
        if base not in known:
            diags.append(f"{where}: unknown element {n!r} for group {group.key} "
                         f"(known: {', '.join(sorted(known))})")


def _check_measure(diags, where, spec, group):
    if not isinstance(spec, dict):
        diags.append(f"{where}: must be a mapping")
        return
    t = spec.get("type")
    if t not in MEASURE_TYPES:
        diags.append(f"{where}.type: unknown measure type {t!r} (known: {', '.join(MEASURE_TYPES)})")
        return
    if t in ("mu_alpha", "coordinatewise", "axis"):
        _check_alpha(diags, f"{where}.alpha", spec.get("alpha"))
        R = spec.get("R")
        if not isinstance(R, int) or R < 1:
            diags.append(f"{where}.R: truncation radius must be a positive integer, got {R!r}")
    if t in ("coordinatewise", "axis"):
        _check_names(diags, f"{where}.S", group, spec.get("S"))
    if t == "coordinatewise" and spec.get("tail", "dropped") not in ("dropped", "renormalized"):
        diags.append(f"{where}.tail: must be 'dropped' or 'renormalized'")
    if t == "lazy":
        h = spec.get("hold")
        if not _is_num(h) or not 0 <= h < 1:
            diags.append(f"{where}.hold: holding probability must lie in [0,1), got {h!r}")
    if t == "mixture":
        parts = spec.get("parts")
        if not isinstance(parts, list) or not parts:
            diags.append(f"{where}.parts: expected a nonempty list")
        else:
            total = 0.0
            for i, p in enumerate(parts):
                w = p.get("weight") if isinstance(p, dict) else None
                if not _is_num(w) or w <= 0:
                    diags.append(f"{where}.parts[{i}].weight: must be positive")
                else:
                    total += w
                _check_measure(diags, f"{where}.parts[{i}]", p.get("measure") if isinstance(p, dict) else None, group)
            if abs(total - 1) > 1e-12 and not any("weight" in d for d in diags):
                diags.append(f"{where}.parts: weights sum to {total}, expected 1")
    if t == "symmetrized":
        _check_measure(diags, f"{where}.of", spec.get("of"), group)


def _check_int_list(diags, where, xs, minimum=1):
    if xs is None:
        diags.append(f"{where}: missing")
    elif not isinstance(xs, list) or not xs:
        diags.append(f"{where}: must be a nonempty list")
    elif not all(isinstance(x, int) and not isinstance(x, bool) and x >= minimum for x in xs):
        diags.append(f"{where}: entries must be integers >= {minimum}")


def _check_weights(diags, where, spec, group):
    if not isinstance(spec, dict):
        diags.append(f"{where}: expected {{S0: [...], parts: [{{letters, alpha}}]}}")
        return
    if spec.get("S0"):
        _check_names(diags, f"{where}.S0", group, spec["S0"])
    parts = spec.get("parts")
    if not isinstance(parts, list) or not parts:
        diags.append(f"{where}.parts: expected a nonempty list")
        return
    for i, p in enumerate(parts):
        if not isinstance(p, dict):
            diags.append(f"{where}.parts[{i}]: must be a mapping")
            continue
        _check_names(diags, f"{where}.parts[{i}].letters", group, p.get("letters"))
        a = p.get("alpha")
        if isinstance(a, str) and re.fullmatch(r"\s*\d+\s*(/\s*\d+\s*)?", a):
            num, _, den = a.partition("/")
            a = int(num) / int(den or 1) if int(den or 1) else -1
        _check_alpha(diags, f"{where}.parts[{i}].alpha", a)


def validate(cfg: ExperimentConfig | dict) -> list[str]:
    """All problems with a config, in a fixed order; empty means runnable."""
    raw = cfg.raw if isinstance(cfg, ExperimentConfig) else cfg
    diags: list[str] = []
    for k in sorted(set(raw) - TOP_KEYS):
        diags.append(f"{k}: unknown top-level key")
    kind = raw.get("kind")
    if kind not in KINDS:
        diags.append(f"kind: unknown experiment kind {kind!r} (known: {', '.join(KINDS)})")
    group = None
    gkey = raw.get("group")
    if gkey is None:
        diags.append("group: missing")
    else:
        try:
            group = get_group(str(gkey))
        except UsageError:
            diags.append(f"group: unknown group {gkey!r}")
    seed = raw.get("seed")
    if seed is None:
        if kind in STOCHASTIC:
            diags.append(f"seed: required for the stochastic kind {kind}")
    elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        diags.append(f"seed: must be a non-negative integer, got {seed!r}")
    if "measure" in raw:
        _check_measure(diags, "measure", raw["measure"], group)
    if "measures" in raw:
        ms = raw["measures"]
        if not isinstance(ms, list) or not ms:
            diags.append("measures: expected a nonempty list")
        else:
            for i, m in enumerate(ms):
                _check_measure(diags, f"measures[{i}]", m, group)
    if "weights" in raw:
        _check_weights(diags, "weights", raw["weights"], group)
    plan = raw.get("plan") or {}
    for key in ("prune_threshold",):
        if key in plan and (not _is_num(plan[key]) or plan[key] < 0):
            diags.append(f"plan.{key}: must be >= 0")
    if "max_support_size" in plan and (not isinstance(plan["max_support_size"], int)
                                       or plan["max_support_size"] <= 0):
        diags.append("plan.max_support_size: must be a positive integer")
    if "strategy" in plan and plan["strategy"] not in ("direct", "repeated-squaring"):
        diags.append("plan.strategy: must be 'direct' or 'repeated-squaring'")
    budget = raw.get("budget") or {}
    for k, v in sorted(budget.items()):
        if not _is_num(v) or v <= 0:
            diags.append(f"budget.{k}: must be positive, got {v!r}")
    p = raw.get("params") or {}
    need_measure = {"return-exponent", "pp-scan", "gjp", "moment-check", "near-diagonal",
                    "spectral-oracle"}
    if kind in need_measure and "measure" not in raw:
        diags.append("measure: required for kind " + kind)
    if kind == "return-exponent":
        _check_int_list(diags, "params.n_list", p.get("n_list"))
        w = p.get("window")
        if w is not None and w != "auto" and not (isinstance(w, list) and len(w) == 2):
            diags.append("params.window: expected [n_min, n_max] or 'auto'")
    elif kind == "volume-exponent":
        if "weights" not in raw:
            diags.append("weights: required for kind volume-exponent")
        _check_int_list(diags, "params.R_list", p.get("R_list"))
    elif kind == "pp-scan":
        _check_int_list(diags, "params.h_list", p.get("h_list"))
        _check_int_list(diags, "params.family.radii", (p.get("family") or {}).get("radii"), 0)
    elif kind == "zeta-test":
        if "weights" not in raw:
            diags.append("weights: required for kind zeta-test")
        if "measures" not in raw:
            diags.append("measures: required for kind zeta-test")
        _check_int_list(diags, "params.R_list", p.get("R_list"))
    elif kind == "gjp":
        _check_int_list(diags, "params.n_list", p.get("n_list"))
        if not isinstance(p.get("m_max"), int) or p.get("m_max", 0) < 1:
            diags.append("params.m_max: must be a positive integer")
    elif kind == "walk-exit":
        if "sampler" not in raw:
            diags.append("sampler: required for kind walk-exit")
        else:
            s = raw["sampler"]
            _check_alpha(diags, "sampler.alpha", s.get("alpha"))
            _check_names(diags, "sampler.S", group, s.get("S"))
        for key in ("n", "trials"):
            if not isinstance(p.get(key), int) or p.get(key, 0) < 1:
                diags.append(f"params.{key}: must be a positive integer")
        g = p.get("gammas")
        if not isinstance(g, list) or not g or not all(_is_num(x) and x > 0 for x in g):
            diags.append("params.gammas: must be a nonempty list of positive numbers")
    elif kind == "form-compare":
        ms = raw.get("measures")
        if not isinstance(ms, list) or len(ms) != 2:
            diags.append("measures: form-compare needs exactly two measures")
    elif kind == "near-diagonal":
        if not isinstance(p.get("n"), int) or p.get("n", 0) < 1:
            diags.append("params.n: must be a positive integer")
        if not _is_num(p.get("eta")) or p.get("eta", 0) <= 0:
            diags.append("params.eta: must be positive")
    return diags
