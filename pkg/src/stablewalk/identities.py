"""Exact identity checks shared by the CLI and the test-suite."""
from __future__ import annotations

import io
import math

import numpy as np

from . import dirichlet as dr
from .engine import ConvolutionPlan, convolve, power, return_series
from .groups import get_group
from .measures import (SparseMeasure, Sampler, build_coordinatewise, build_mu_alpha, build_psi,
                       symmetrize_multiplicative)
from .metric import WordMetric
from .walks import simulate_walk


def _same(a: SparseMeasure, b: SparseMeasure) -> bool:
    return np.array_equal(a.rows, b.rows) and np.array_equal(a.masses, b.masses)


def exact_suite(seed: int, params: dict | None = None):
    """Yield (name, passed, detail) for each exact identity."""
    params = params or {}
    Z = get_group("Z^1")
    H = get_group("heisenberg3")
    plan = ConvolutionPlan()

    walk = SparseMeasure.uniform(Z, Z.generators)
    nu = build_coordinatewise(build_psi(3, 1.0, 3), H.malcev_basis().basis, H)
    ok = _same(convolve(SparseMeasure.delta(H), nu, plan), nu) and \
        _same(convolve(nu, SparseMeasure.delta(H), plan), nu)
    yield "delta_identity", ok, "delta_e * nu = nu * delta_e = nu on the Heisenberg group"

    s = return_series(walk, [2, 4], plan)
    ok = s.value.tolist() == [0.5, 0.375] and s.hi.tolist() == [0.5, 0.375]
    yield "simple_walk", ok, f"return values {s.value.tolist()} (want [0.5, 0.375])"

    ok = all(_same(symmetrize_multiplicative(m, plan), power(m, 2, plan))
             for m in (walk, nu, build_mu_alpha(WordMetric(Z), 1.0, 50)))
    yield "symmetrize_square", ok, "reflect(mu) * mu equals mu^(2) entry by entry"

    worst = 0.0
    for m in (nu, build_mu_alpha(WordMetric(Z), 0.5, 200)):
        for n in (2, 3, 5, 8):
            P = power(m, n, ConvolutionPlan(prune_threshold=1e-9))
            worst = max(worst, abs(P.total + P.dropped_mass - 1.0))
    yield "mass_conservation", worst <= 1e-10, f"max |total + dropped - 1| = {worst:.2e}"

    rng = np.random.default_rng(seed)
    metric = WordMetric(H)
    ball = metric.ball_rows(4)
    worst_ratio = 0.0
    for _ in range(params.get("factorizations", 100)):
        f = dr.TestFunction(H, ball, rng.standard_normal(len(ball)))
        k = int(rng.integers(2, 6))
        parts = ball[rng.integers(0, len(ball), size=k)]
        h = H.identity
        for r in parts:
            h = h * H.element(r)
        lhs = dr.shift_energy(f, h)
        rhs = k * sum(dr.shift_energy(f, H.element(r)) for r in parts)
        worst_ratio = max(worst_ratio, lhs / rhs if rhs > 0 else (math.inf if lhs > 0 else 0.0))
    yield ("factorization_inequality", worst_ratio <= 1 + 1e-12,
           f"max shift(h) / (k sum shift(h_i)) = {worst_ratio:.4f} over random factorizations")

    psi = build_psi(1, 1.0, 1000)
    sampler = Sampler.from_psi(psi, (Z.element([1]),), Z)
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        w = simulate_walk(sampler, 50, 200, seed, metric=WordMetric(Z), workers=2)
        np.savetxt(buf, np.column_stack([w.sup_disp, w.end_disp]))
        outs.append(buf.getvalue())
    yield "seed_determinism", outs[0] == outs[1], "two runs with one seed give identical bytes"
