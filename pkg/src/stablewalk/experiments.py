"""Experiment kinds: each turns a validated config into tables, results and checks."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import dirichlet as dr
from .engine import (ConvolutionPlan, convolve, fit_exponent, largest_certified_window,
                     near_diagonal_check, power, return_series)
from .errors import CertificationError, UsageError
from .groups import Group, get_group
from .measures import (SparseMeasure, Sampler, build_axis_measure, build_coordinatewise,
                       build_mu_alpha, build_psi, check_U, convex_combination, gjp_profile,
                       symmetrize_multiplicative, weak_moment_stat)
from .metric import WordMetric
from .polycyclic import MalcevBasis, pi_S_rows, unipotent4_inverse_coordinates, \
    unipotent4_matrix_tuple
from .walks import exit_time_stats, simulate_walk
from .weights import (WeightedNorm, as_fraction, build_weight_system, gamma,
                      propagate_weights, volume_exponent_fit, weighted_ball_count)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class Outcome:
    results: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # file stem -> (header, rows)
    checks: list[Check] = field(default_factory=list)
    certified: dict = field(default_factory=dict)

    def check(self, name, passed, detail):
        self.checks.append(Check(name, bool(passed), detail))


@dataclass
class Context:
    group: Group
    seed: int | None
    threads: int
    mem_bytes: int | None
    _metrics: dict = field(default_factory=dict)

    def metric(self, radius_cap=None) -> WordMetric:
        key = radius_cap
        if key not in self._metrics:
            self._metrics[key] = WordMetric(self.group, radius_cap=radius_cap)
        return self._metrics[key]


# -- builders --------------------------------------------------------------------

def _elements(group, names):
    return tuple(group.named(str(n)) for n in names)


def build_measure(spec: dict, ctx: Context) -> SparseMeasure:
    g = ctx.group
    t = spec["type"]
    if t == "mu_alpha":
        cap = spec.get("radius_cap", spec["R"])
        return build_mu_alpha(ctx.metric(cap), spec["alpha"], spec["R"])
    if t == "coordinatewise":
        S = _elements(g, spec["S"])
        psi = build_psi(len(S), spec["alpha"], spec["R"])
        return build_coordinatewise(psi, S, g, tail=spec.get("tail", "dropped"))
    if t == "axis":
        return build_axis_measure(_elements(g, spec["S"]), spec["alpha"], spec["R"], g)
    if t == "simple":
        return SparseMeasure.uniform(g, g.generators, label="simple")
    if t == "lazy":
        h = spec["hold"]
        walk = SparseMeasure.uniform(g, g.generators, label="simple")
        return convex_combination([(h, SparseMeasure.delta(g)), (1 - h, walk)])
    if t == "delta":
        return SparseMeasure.delta(g)
    if t == "mixture":
        return convex_combination([(p["weight"], build_measure(p["measure"], ctx))
                                   for p in spec["parts"]])
    if t == "symmetrized":
        return symmetrize_multiplicative(build_measure(spec["of"], ctx))
    raise UsageError(f"unknown measure type {t!r}")


def build_plan(cfg, ctx: Context) -> ConvolutionPlan:
    p = dict(cfg.get("plan") or {})
    if ctx.mem_bytes:
        # the dense accumulator and the largest support dominate memory
        p["dense_cells"] = min(p.get("dense_cells", 2**26), ctx.mem_bytes // 32)
        p["max_support_size"] = min(p.get("max_support_size", 5_000_000), ctx.mem_bytes // 96)
    return ConvolutionPlan(**p)


def build_weights(spec: dict, group: Group):
    parts = [(p["letters"], as_fraction(p["alpha"])) for p in spec["parts"]]
    ws = build_weight_system(spec.get("S0") or [], parts, group)
    basis = group.malcev_basis()
    return ws, basis, propagate_weights(ws, basis)


def _measure_alpha(spec: dict):
    if spec.get("type") == "mixture":
        return None
    return spec.get("alpha")


# -- kinds -------------------------------------------------------------------------

def run_return_exponent(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p, acc = cfg.params, cfg.acceptance
    mu = build_measure(cfg["measure"], ctx)
    if not mu.symmetric and p.get("symmetrize", False):
        mu = symmetrize_multiplicative(mu)
    series = return_series(mu, p["n_list"], build_plan(cfg, ctx))
    rel = series.rel_error
    out.tables["series"] = (["n", "value", "lo", "hi", "rel_err"],
                            [[int(n), v, lo, hi, r] for n, v, lo, hi, r in
                             zip(series.n, series.value, series.lo, series.hi, rel)])
    max_rel = p.get("max_rel", 0.1)
    window = p.get("window", "auto")
    cert = largest_certified_window(series, max_rel)
    if window in (None, "auto"):
        window = cert
    out.results.update(measure=mu.label, support=len(mu), certified_window=cert,
                       window=window, dropped_mass_input=mu.dropped_mass)
    out.certified["max_rel_error"] = float(np.max(rel))
    target = acc.get("slope_target")
    try:
        if window is None:
            raise CertificationError("no point has certified relative error below "
                                     f"{max_rel}")
        slope, stderr = fit_exponent(series, window, max_rel)
        out.results.update(slope=slope, stderr=stderr)
        if target is not None:
            tol = acc.get("slope_tol", 0.1)
            out.check("slope", abs(slope - target) <= tol,
                      f"slope {slope:.4f} vs target {target} +- {tol} over {window}")
    except CertificationError as exc:
        out.results.update(slope=None, fit_error=str(exc))
        out.check("slope", False, f"fit refused: {exc}")
    return out


def run_volume_exponent(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p, acc = cfg.params, cfg.acceptance
    ws, basis, eff = build_weights(cfg["weights"], ctx.group)
    rep = gamma(eff)
    R_list = p["R_list"]
    counts = [weighted_ball_count(R, ws, basis, eff) for R in R_list]
    slope = volume_exponent_fit(R_list, ws, basis, eff)
    out.tables["counts"] = (["R", "count"], [[R, c] for R, c in zip(R_list, counts)])
    out.results.update(gamma=str(rep.gamma), gamma_float=float(rep.gamma), slope=slope,
                       slot_weights=[str(w) for w in rep.slot_weights],
                       slot_names=list(rep.slot_names),
                       ladder=[[str(w), r] for w, r in rep.ladder])
    out.tables["gamma"] = rep.to_json()
    if "gamma_exact" in acc:
        want = Fraction(str(acc["gamma_exact"]))
        out.check("gamma_exact", rep.gamma == want, f"gamma = {rep.gamma}, expected {want}")
    if "slope_target" in acc:
        tol = acc.get("slope_tol", 0.1)
        out.check("volume_slope", abs(slope - acc["slope_target"]) <= tol,
                  f"slope {slope:.4f} vs {acc['slope_target']} +- {tol}")
    return out


def _family(spec: dict, metric: WordMetric, seed, norm=None, w_star=None):
    return dr.default_family(metric, spec["radii"], seed=seed or 0,
                             n_random=spec.get("n_random", 100),
                             random_radius=spec.get("random_radius"),
                             zeta_norm=norm, w_star=w_star, zeta_R=spec.get("zeta_R", ()))


def _shift_elements(group, p):
    gen = group.named(p.get("h_generator", next(iter(group.named_generators()))))
    return [gen ** int(k) for k in p["h_list"]]


def run_pp_scan(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p, acc = cfg.params, cfg.acceptance
    mu = build_measure(cfg["measure"], ctx)
    metric = ctx.metric(p.get("radius_cap"))
    fam = _family(p["family"], metric, cfg.get("seed"))
    alpha = p.get("normalizer_alpha", _measure_alpha(cfg["measure"]))
    rep = dr.pp_scan(mu, fam, _shift_elements(ctx.group, p), dr.length_power(metric, alpha))
    out.tables["pp"] = (["h", "normalizer", "max_ratio", "normalized", "argmax", "zero_zero",
                         "violations"],
                        [[" ".join(map(str, r.h)), r.normalizer, r.max_ratio, r.normalized,
                          r.argmax, r.zero_zero, r.violations] for r in rep.rows])
    out.results.update(constant=rep.constant, spread=rep.spread, family_size=len(fam),
                       violations=sum(r.violations for r in rep.rows))
    if "max_spread" in acc:
        out.check("pp_spread", rep.spread < acc["max_spread"],
                  f"max/min of ratio/|h|^alpha = {rep.spread:.3f} (limit {acc['max_spread']})")
    return out


def run_zeta_test(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p, acc = cfg.params, cfg.acceptance
    ws, basis, eff = build_weights(cfg["weights"], ctx.group)
    norm = WeightedNorm(ws, basis, eff)
    parts = [build_measure(m, ctx) for m in cfg["measures"]]
    rows = dr.zeta_test(parts, norm, ws.w_star, p["R_list"])
    out.tables["zeta"] = (["R", "part", "ratio", "scaled", "support", "norm2"],
                          [[r.R, r.part, r.ratio, r.scaled, r.support, r.norm2] for r in rows])
    spreads = []
    for i in range(len(parts)):
        s = [r.scaled for r in rows if r.part == i]
        spreads.append(max(s) / min(s))
    out.results.update(w_star=str(ws.w_star), spreads=spreads)
    if "max_spread" in acc:
        worst = max(spreads)
        out.check("zeta_bracket", worst < acc["max_spread"],
                  f"scaled ratios vary by {worst:.3f} (limit {acc['max_spread']})")
    return out


def run_gjp(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p, acc = cfg.params, cfg.acceptance
    nu = build_measure(cfg["measure"], ctx)
    prof = gjp_profile(nu, p["m_max"])
    times = sorted(p["n_list"])  # the 2n values
    half = np.array([t // 2 for t in times])
    a = prof.a(half)
    series = return_series(nu, times, build_plan(cfg, ctx))
    ratio_lo, ratio_hi = series.lo * a, series.hi * a
    out.tables["gjp"] = (["two_n", "n", "a_n", "Q_a_n", "return_lo", "return_hi",
                          "ratio_lo", "ratio_hi"],
                         [[int(t), int(n), int(an), float(prof.Q[an - 1]), lo, hi, rl, rh]
                          for t, n, an, lo, hi, rl, rh in
                          zip(times, half, a, series.lo, series.hi, ratio_lo, ratio_hi)])
    grid = np.unique(np.geomspace(1, p["m_max"], 200).astype(int))
    out.tables["profile"] = (["m", "K", "G", "Q"],
                             [[int(m), prof.K[m - 1], prof.G[m - 1], prof.Q[m - 1]] for m in grid])
    slope = float(np.polyfit(np.log(half), np.log(a), 1)[0])
    bracket = float(ratio_hi.max() / ratio_lo.min())
    out.results.update(a_slope=slope, ratio_bracket=bracket)
    out.certified["max_rel_error"] = float(np.max(series.rel_error))
    if "a_slope_target" in acc:
        tol = acc.get("a_slope_tol", 0.1)
        out.check("a_n_slope", abs(slope - acc["a_slope_target"]) <= tol,
                  f"a_n slope {slope:.4f} vs {acc['a_slope_target']} +- {tol}")
    if "ratio_bracket" in acc:
        out.check("ratio_bracket", bracket <= acc["ratio_bracket"],
                  f"return * a_n spans a factor {bracket:.3f} (limit {acc['ratio_bracket']})")
    return out


def run_moment_check(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p, acc = cfg.params, cfg.acceptance
    mu = build_measure(cfg["measure"], ctx)
    metric = ctx.metric(p.get("radius_cap", mu.truncation_radius))
    alphas = p.get("alphas", [_measure_alpha(cfg["measure"])])
    stats = [weak_moment_stat(mu, metric, a) for a in alphas]
    out.tables["moments"] = (["alpha", "weak_moment"], [[a, s] for a, s in zip(alphas, stats)])
    u = check_U(mu, metric, _measure_alpha(cfg["measure"]) or alphas[0])
    out.results.update(weak_moment=dict(zip(map(str, alphas), stats)), U=u.rows[0] if u.rows else {})
    if "max_weak_moment" in acc:
        out.check("weak_moment", max(stats) <= acc["max_weak_moment"],
                  f"max statistic {max(stats):.4g} (limit {acc['max_weak_moment']})")
    order = np.argsort(alphas)
    mono = all(np.diff(np.array(stats)[order]) >= -1e-12)
    out.check("moment_monotone", mono, "statistic non-decreasing in alpha")
    return out


def run_walk_exit(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p, acc = cfg.params, cfg.acceptance
    s = cfg["sampler"]
    S = _elements(ctx.group, s["S"])
    psi = build_psi(len(S), s["alpha"], s["R"])
    sampler = Sampler.from_psi(psi, S, ctx.group)
    metric = ctx.metric(p.get("radius_cap"))
    ws = simulate_walk(sampler, p["n"], p["trials"], cfg["seed"], metric=metric,
                       workers=p.get("workers", ctx.threads))
    alpha = p.get("alpha", s["alpha"])
    ests = [exit_time_stats(ws, g, alpha) for g in p["gammas"]]
    out.tables["walks"] = (["trial", "sup_disp", "end_disp"],
                           [[i, a, b] for i, (a, b) in
                            enumerate(zip(ws.sup_disp.tolist(), ws.end_disp.tolist()))])
    out.tables["exit"] = (["gamma", "threshold", "estimate", "ci_low", "ci_high", "censored"],
                          [[e.gamma, e.threshold, e.estimate, e.ci_low, e.ci_high, e.censored]
                           for e in ests])
    out.results.update(bias_bound=ws.bias_bound,
                       estimates={str(e.gamma): e.estimate for e in ests})
    order = np.argsort(p["gammas"])
    vals = np.array([e.estimate for e in ests])[order]
    out.check("exit_monotone", bool(np.all(np.diff(vals) <= 0)),
              "exceedance non-increasing in gamma")
    if "gamma_at" in acc:
        e = next(e for e in ests if e.gamma == acc["gamma_at"])
        out.check("exit_bound", e.estimate < acc["below"],
                  f"estimate {e.estimate:.4f} at gamma={e.gamma} (limit {acc['below']})")
    return out


def run_form_compare(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p, acc = cfg.params, cfg.acceptance
    mu1, mu2 = (build_measure(m, ctx) for m in cfg["measures"])
    fam_spec = p.get("family", {})
    metric = ctx.metric(p.get("radius_cap"))
    maker = dr.random_signs if fam_spec.get("type") == "signs" else dr.random_functions
    fam = maker(metric, fam_spec.get("radius", 6), fam_spec.get("count", 100), cfg["seed"])
    iv = dr.form_comparison(mu1, mu2, fam)
    out.results.update(lo=iv.lo, hi=iv.hi, used=iv.used, excluded=iv.excluded,
                       support=fam[0].support_size)
    out.tables["forms"] = (["lo", "hi", "used", "excluded"], [[iv.lo, iv.hi, iv.used, iv.excluded]])
    if "bracket" in acc:
        C = acc["bracket"]
        out.check("form_bracket", 1 / C <= iv.lo and iv.hi <= C,
                  f"ratio interval [{iv.lo:.4f}, {iv.hi:.4f}] within [1/{C}, {C}]")
    return out


def run_near_diagonal(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p, acc = cfg.params, cfg.acceptance
    mu = build_measure(cfg["measure"], ctx)
    metric = ctx.metric(p.get("radius_cap"))
    alpha = p.get("alpha", _measure_alpha(cfg["measure"]))
    rep = near_diagonal_check(mu, p["n"], p["eta"], metric, alpha, build_plan(cfg, ctx))
    out.tables["near_diagonal"] = (["g", "ratio"],
                                   [[" ".join(map(str, r)), v] for r, v in
                                    zip(rep.rows.tolist(), rep.ratios.tolist())])
    out.results.update(min_ratio=rep.min_ratio, max_ratio=rep.max_ratio, spread=rep.spread,
                       radius=rep.radius)
    out.certified["max_rel_error"] = rep.max_rel_error
    if "max_spread" in acc:
        out.check("near_diagonal_spread", rep.spread < acc["max_spread"],
                  f"max/min ratio {rep.spread:.3f} (limit {acc['max_spread']})")
    return out


def run_coordinate_identities(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p = cfg.params
    g = get_group("unipotent4")
    S = unipotent4_matrix_tuple(g)
    S_rows = np.array([s.coords for s in S])
    rng = np.random.default_rng(cfg["seed"])
    lim = p.get("range", 5)
    A = rng.integers(-lim, lim + 1, size=(p.get("trials", 1000), 6))
    X = pi_S_rows(A, S_rows, g)
    matrix_ok = True
    for a, x in zip(A, X):
        M = g.to_matrix(x)
        want = np.eye(4, dtype=np.int64)
        for (i, j), v in zip([(0, 3), (1, 3), (2, 3), (0, 2), (1, 2), (0, 1)], a):
            want[i, j] = v
        matrix_ok &= bool(np.array_equal(M, want))
    B = unipotent4_inverse_coordinates(A)
    prod = g.mul(X, pi_S_rows(B, S_rows, g))
    inv_ok = bool(np.all(prod == 0))
    out.results.update(trials=len(A), matrix_form=matrix_ok, inverse_identity=inv_ok)
    out.check("matrix_form", matrix_ok, f"pi_S matrix form on {len(A)} random tuples")
    out.check("inverse_identity", inv_ok, f"pi_S(a)^-1 = pi_S(a') on {len(A)} random tuples")
    return out


def run_exact_identities(cfg, ctx: Context) -> Outcome:
    from . import identities
    out = Outcome()
    for name, ok, detail in identities.exact_suite(cfg["seed"], cfg.params):
        out.check(name, ok, detail)
    out.results.update({c.name: c.passed for c in out.checks})
    return out


def run_spectral_oracle(cfg, ctx: Context) -> Outcome:
    out = Outcome()
    p = cfg.params
    mu = build_measure(cfg["measure"], ctx)
    metric = ctx.metric(p.get("radius_cap"))
    fam = _family(p["family"], metric, cfg.get("seed"))
    rows = dr.profile_oracle_check(mu, metric, fam, p.get("max_elements", 400))
    out.tables["profile"] = (["v", "upper", "radius", "ball_size", "dense_min", "ok"],
                             [[r.v, r.upper, r.radius, r.ball_size, r.dense_min, r.ok]
                              for r in rows])
    out.results.update(sizes=len(rows), all_ok=all(r.ok for r in rows))
    out.check("profile_dominates", bool(rows) and all(r.ok for r in rows),
              f"{sum(r.ok for r in rows)}/{len(rows)} support sizes dominate the dense minimum")
    return out


RUNNERS = {
    "return-exponent": run_return_exponent,
    "volume-exponent": run_volume_exponent,
    "pp-scan": run_pp_scan,
    "zeta-test": run_zeta_test,
    "gjp": run_gjp,
    "moment-check": run_moment_check,
    "walk-exit": run_walk_exit,
    "form-compare": run_form_compare,
    "near-diagonal": run_near_diagonal,
    "coordinate-identities": run_coordinate_identities,
    "exact-identities": run_exact_identities,
    "spectral-oracle": run_spectral_oracle,
}
