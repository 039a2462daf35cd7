import itertools
import json
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stablewalk.errors import DomainError, UsageError
from stablewalk.groups import get_group
from stablewalk.polycyclic import MalcevBasis
from stablewalk.weights import (WeightedNorm, build_weight_system, exact_norm_small, gamma,
                                propagate_weights, volume_exponent_fit, weighted_ball_count,
                                weighted_norm_upper)

fractions = st.sampled_from([F(1, 2), F(3, 4), F(1), F(5, 4), F(3, 2), F(7, 4)])


def setup(key, S0, parts):
    g = get_group(key)
    ws = build_weight_system(S0, parts, g)
    basis = g.malcev_basis()
    return g, ws, basis, propagate_weights(ws, basis)


def test_letter_weights(D):
    ws = build_weight_system([], [(["e1"], 1)], get_group("Z^1"))
    assert [l.weight for l in ws.letters] == [1]
    near = build_weight_system([], [(["e1"], 1.999)], get_group("Z^1"))
    assert abs(float(near.letters[0].weight) - 0.5) < 1e-3
    ws = build_weight_system(["u"], [(["u"], F(2, 3)), (["v"], F(2, 3)), (["z"], F(2, 3))], D)
    assert [(l.name, l.weight) for l in ws.letters] == [
        ("u", F(1, 2)), ("u", F(3, 2)), ("v", F(3, 2)), ("z", F(3, 2))]
    for bad in (0, 2, 2.5, -1):
        with pytest.raises(UsageError, match=r"\(0, ?2\)"):
            build_weight_system([], [(["e1"], bad)], get_group("Z^1"))


@given(fractions)
def test_heisenberg_propagation(alpha):
    g, ws, basis, eff = setup("heisenberg3", [], [(["a", "b", "c"], alpha)])
    w = 1 / alpha
    assert eff.weights == (w, w, max(w, 2 * w))
    assert gamma(eff).gamma == 4 / alpha


@given(st.integers(1, 4), fractions)
def test_abelian(k, alpha):
    g, ws, basis, eff = setup(f"Z^{k}", [], [([f"e{i + 1}" for i in range(k)], alpha)])
    assert eff.weights == tuple([1 / alpha] * k)
    assert gamma(eff).gamma == k / alpha


@given(fractions)
def test_dihedral(alpha):
    g, ws, basis, eff = setup("dihedralxZ", [], [(["u", "v", "z"], alpha)])
    assert basis.names == ("uv", "z")
    # uv is reached only through the half-weight generators of N
    assert eff.weights == (F(1, 2), 1 / alpha)
    assert gamma(eff).gamma == F(1, 2) + 1 / alpha


@pytest.mark.parametrize("alpha,want", [(F(1, 2), F(8)), (F(1), F(4)), (F(3, 2), F(8, 3))])
def test_heisenberg_gamma(alpha, want):
    _, _, _, eff = setup("heisenberg3", [], [(["a", "b"], alpha)])
    rep = gamma(eff)
    assert rep.gamma == want
    assert sum(r for _, r in rep.ladder) == 3
    assert all(r >= 1 for _, r in rep.ladder)
    js = json.loads(rep.to_json())
    assert F(js["gamma"]["numerator"], js["gamma"]["denominator"]) == want


@given(st.permutations(["a", "b"]), st.integers(1, 3), fractions)
def test_gamma_invariance(order, dup, alpha):
    _, _, _, base = setup("heisenberg3", [], [(["a", "b"], alpha)])
    _, _, _, perm = setup("heisenberg3", [], [(list(order) * dup, alpha)])
    assert gamma(base).gamma == gamma(perm).gamma


@given(fractions, fractions)
def test_gamma_monotone_in_alpha(a1, a2):
    lo, hi = sorted((a1, a2))
    for key, letters in (("heisenberg3", ["a", "b"]), ("dihedralxZ", ["u", "v", "z"])):
        g_lo = gamma(setup(key, [], [(letters, lo)])[3]).gamma
        g_hi = gamma(setup(key, [], [(letters, hi)])[3]).gamma
        assert g_hi <= g_lo


def test_mixed_parts(H):
    # b plain (weight 1/2), a at alpha=1/2 (weight 2): [a,b] gets 5/2.
    # The filtration needs b first to be adapted.
    ws = build_weight_system(["b"], [(["a"], F(1, 2))], H)
    with pytest.raises(DomainError, match="not adapted"):
        propagate_weights(ws, H.malcev_basis())
    a, b = H.named("a"), H.named("b")
    basis = MalcevBasis(H, [b, a, H.commutator(a, b)], names=("b", "a", "c"))
    eff = propagate_weights(ws, basis)
    assert eff.weights == (F(1, 2), F(2), F(5, 2))
    assert gamma(eff).gamma == 5


def test_norm_on_Z(Z):
    for alpha in (F(1, 2), F(1), F(3, 2)):
        _, ws, basis, eff = setup("Z^1", [], [(["e1"], alpha)])
        N = WeightedNorm(ws, basis, eff)
        assert N(Z.identity) == 0
        for a in (1, 2, 5, -7, 100):
            assert math.isclose(N(Z.element([a])), abs(a) ** float(alpha), rel_tol=1e-12)


def test_norm_heisenberg_center(H):
    _, ws, basis, eff = setup("heisenberg3", [], [(["a", "b"], 1)])
    c = basis.basis[2]
    ratios = [weighted_norm_upper(c ** m, ws, basis, eff) / m ** 0.5 for m in (4, 16, 64, 256, 1024)]
    assert max(ratios) / min(ratios) < 4


@pytest.mark.parametrize("key,S0,parts", [
    ("heisenberg3", [], [(["a", "b"], 1)]),
    ("heisenberg3", ["a"], [(["b"], F(3, 2))]),
    ("Z^2", [], [(["e1"], 1), (["e2"], F(1, 2))]),
])
def test_norm_upper_dominates_exact(key, S0, parts):
    g, ws, basis, eff = setup(key, S0, parts)
    table, threshold = exact_norm_small(ws, max_deg=3)
    N = WeightedNorm(ws, basis, eff)
    assert len(table) > 10
    for coords, exact in table.items():
        assert N(g.element(coords)) >= exact - 1e-12


def test_exact_norm_brute_force(H):
    # exhaustive oracle: every word of length <= 5 over a, b and inverses
    ws = build_weight_system([], [(["a", "b"], 1)], H)
    table, threshold = exact_norm_small(ws, max_deg=2)
    a, b = H.named("a"), H.named("b")
    letters = [(0, a), (0, a.inverse()), (1, b), (1, b.inverse())]
    best = {}
    for n in range(6):
        for word in itertools.product(letters, repeat=n):
            deg = [0, 0]
            x = H.identity
            for i, s in word:
                deg[i] += 1
                x = x * s
            if max(deg) > 2:
                continue
            cost = float(max(deg))  # weight 1 letters: deg ** 1
            best[x.coords] = min(best.get(x.coords, math.inf), cost)
    for k, v in best.items():
        if v < threshold:
            assert table[k] == v


def test_ball_counts(Z2):
    _, ws, basis, eff = setup("Z^2", [], [(["e1", "e2"], F(1, 2))])
    assert weighted_ball_count(0.5, ws, basis, eff) == 1
    for R in (1, 2, 3.5, 10):
        r = math.floor(R ** 2)  # weight 1/alpha = 2
        assert weighted_ball_count(R, ws, basis, eff) == (2 * r + 1) ** 2


@pytest.mark.parametrize("key,letters", [("heisenberg3", ["a", "b"]),
                                         ("dihedralxZ", ["u", "v", "z"])])
def test_ball_count_enumeration_agrees(key, letters):
    _, ws, basis, eff = setup(key, [], [(letters, 1)])
    for R in (2, 4, 8):
        assert weighted_ball_count(R, ws, basis, eff) == \
            weighted_ball_count(R, ws, basis, eff, enumerate_rows=True)


def test_volume_fits():
    _, ws, basis, eff = setup("dihedralxZ", [], [(["u", "v", "z"], 1)])
    assert abs(volume_exponent_fit([16, 32, 64, 128, 256], ws, basis, eff) - 1.5) <= 0.1
    _, ws, basis, eff = setup("heisenberg3", [], [(["a", "b"], 1)])
    assert abs(volume_exponent_fit([4, 8, 16, 32], ws, basis, eff) - 4) <= 0.5
    _, ws, basis, eff = setup("Z^1", [], [(["e1"], 1)])
    assert abs(volume_exponent_fit([16, 64, 256, 1024], ws, basis, eff) - 1) <= 0.05


@pytest.mark.parametrize("key,S0,parts", [
    ("Z^1", [], [(["e1"], F(1, 2))]),
    ("Z^3", ["e1"], [(["e2", "e3"], F(3, 2))]),
    ("heisenberg3", [], [(["a", "b"], F(3, 2))]),
    ("dihedralxZ", [], [(["u", "v", "z"], F(1, 2))]),
    ("unipotent4", [], [(["M12", "M23", "M34"], 1)]),
])
def test_volume_fit_tracks_gamma(key, S0, parts):
    _, ws, basis, eff = setup(key, S0, parts)
    R_list = [4, 8, 16, 32] if key in ("heisenberg3", "unipotent4") else [16, 32, 64, 128]
    assert abs(volume_exponent_fit(R_list, ws, basis, eff) - float(gamma(eff).gamma)) <= 0.5


def test_volume_fit_needs_four_radii():
    _, ws, basis, eff = setup("Z^1", [], [(["e1"], 1)])
    with pytest.raises(UsageError):
        volume_exponent_fit([2, 4, 8], ws, basis, eff)
