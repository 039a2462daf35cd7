import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stablewalk.errors import DomainError, UsageError
from stablewalk.groups import get_group
from stablewalk.measures import (Sampler, SparseMeasure, build_axis_measure, build_coordinatewise,
                                 build_mu_alpha, build_psi, check_BL, check_L, check_U,
                                 convex_combination, gjp_profile, symmetrize_multiplicative,
                                 weak_moment_stat)
from stablewalk.metric import WordMetric
from stablewalk.polycyclic import pi_S_rows, unipotent4_inverse_coordinates, \
    unipotent4_matrix_tuple

alphas = st.sampled_from([0.5, 1.0, 1.5, 1.9])


def same(a, b):
    return np.array_equal(a.rows, b.rows) and np.array_equal(a.masses, b.masses)


def test_mu_alpha_on_Z(Z, metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 100)
    mu.check_invariants()
    assert math.isclose(mu.total, 1.0, abs_tol=1e-12)
    e, one = Z.identity, Z.element([1])
    assert math.isclose(mu.mass(e) / mu.mass(one), 4.0, rel_tol=1e-12)
    for g in Z.elements(mu.rows):
        assert mu.mass(g) == mu.mass(g.inverse())


@given(alphas, st.integers(1, 30))
def test_mu_alpha_invariants(alpha, R):
    M = WordMetric(get_group("Z^2"))
    mu = build_mu_alpha(M, alpha, R)
    mu.check_invariants()
    assert mu.dropped_mass == 0.0
    assert len(mu) == M.ball_count(R)


def test_mu_alpha_rejects_alpha(metric_Z):
    for bad in (0.0, 2.0, 2.5, -1):
        with pytest.raises(UsageError, match=r"\(0, ?2\)"):
            build_mu_alpha(metric_Z, bad, 10)


@given(alphas, st.integers(1, 4), st.integers(0, 6))
def test_psi(alpha, k, R):
    if (2 * R + 1) ** k > 20000:
        return
    psi = build_psi(k, alpha, R)
    assert math.isclose(psi.masses.sum() + psi.tail_mass, 1.0, abs_tol=1e-12)
    assert psi.tail_mass > 0
    # radial: psi(a) = psi(-a)
    assert np.allclose(psi(psi.points), psi(-psi.points), rtol=0, atol=0)
    assert np.allclose(psi.masses, psi(psi.points), rtol=1e-13)


def test_psi_one_dimensional_ratio():
    for alpha in (0.5, 1.0, 1.5):
        psi = build_psi(1, alpha, 10)
        assert math.isclose(psi([0])[0] / psi([1])[0], 2 ** (1 + alpha), rel_tol=1e-12)


def test_psi_tail_against_direct_sum():
    # k = 1: tail is 2 * sum_{a > R} (1+a)^(-1-alpha), summed directly far out
    # and closed by the integral beyond
    alpha, R = 1.0, 50
    psi = build_psi(1, alpha, R)
    a = np.arange(R + 1, 10**7, dtype=float)
    direct = 2 * ((1 + a) ** (-1 - alpha)).sum() + 2 * (1 + 10**7 - 0.5) ** (-alpha) / alpha
    assert math.isclose(psi.tail_mass / psi.normalization, direct, rel_tol=1e-6)


def test_psi_weak_tail_k2():
    psi = build_psi(2, 1.0, 64)
    norms = np.linalg.norm(psi.points, axis=1)
    stats = [t * psi.masses[norms >= t].sum() for t in (2, 4, 8, 16, 32)]
    assert max(stats) / min(stats) < 3


def test_coordinatewise_on_Z_equals_psi(Z):
    psi = build_psi(1, 1.0, 20)
    nu = build_coordinatewise(psi, (Z.element([1]),), Z)
    nu.check_invariants()
    assert np.allclose(nu.masses_at(psi.points), psi.masses, rtol=1e-15)
    assert math.isclose(nu.dropped_mass, psi.tail_mass, rel_tol=1e-9)


def test_coordinatewise_reflection_invariance(H):
    psi = build_psi(3, 1.0, 3)
    S = H.malcev_basis().basis
    nu = build_coordinatewise(psi, S, H)
    # reflecting psi permutes its points; rebuild from the reflected table
    order = np.lexsort((-psi.points).T[::-1])
    flipped = type(psi)(psi.k, psi.alpha, psi.box_radius, psi.normalization,
                        -psi.points[order], psi.masses[order], psi.tail_mass, psi.tail_l2)
    nu2 = build_coordinatewise(flipped, S, H)
    assert np.array_equal(nu.rows, nu2.rows)
    assert np.allclose(nu.masses, nu2.masses, rtol=1e-15, atol=0)


def test_coordinatewise_unipotent4_inverse_pairs(U4):
    psi = build_psi(6, 1.0, 1)
    S = unipotent4_matrix_tuple(U4)
    nu = build_coordinatewise(psi, S, U4)
    nu.check_invariants()
    S_rows = np.array([s.coords for s in S])
    A = psi.points
    B = unipotent4_inverse_coordinates(A)
    X = pi_S_rows(A, S_rows, U4)
    # nu(pi_S(a)) = (psi(a) + psi(a')) / 2 where pi_S(a') is the inverse
    want = (psi(A) + psi(B)) / 2
    inside = np.abs(B).max(axis=1) <= 1
    assert np.allclose(nu.masses_at(X)[inside], want[inside], rtol=1e-12)


def test_coordinatewise_renormalized(H):
    psi = build_psi(3, 1.0, 2)
    nu = build_coordinatewise(psi, H.malcev_basis().basis, H, tail="renormalized")
    nu.check_invariants()
    assert nu.dropped_mass == 0.0


def test_axis_measure(Z2):
    S = (Z2.named("e1"), Z2.named("e2"))
    mu = build_axis_measure(S, 1.0, 10, Z2)
    mu.check_invariants()
    a = np.arange(-10, 11)
    w = (1.0 + np.abs(a)) ** -2.0
    c = 1 / (2 * w.sum())
    # the origin collects the a = 0 term from both axes
    assert math.isclose(mu.mass(Z2.identity), 2 * c, rel_tol=1e-12)
    assert math.isclose(mu.mass(Z2.element([3, 0])), c * 4 ** -2, rel_tol=1e-12)
    assert mu.mass(Z2.element([1, 1])) == 0
    for g in Z2.elements(mu.rows):
        assert g.coords[0] == 0 or g.coords[1] == 0


def test_convex_combination(metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 50)
    nu = build_mu_alpha(metric_Z, 0.5, 30)
    assert same(convex_combination([(1.0, mu)]), mu)
    assert np.allclose(convex_combination([(0.5, mu), (0.5, mu)]).masses, mu.masses, rtol=1e-15)
    mix = convex_combination([(0.5, mu), (0.5, nu)])
    mix.check_invariants()
    assert np.allclose(mix.masses_at(mu.rows), 0.5 * mu.masses + 0.5 * nu.masses_at(mu.rows),
                       rtol=1e-14)
    with pytest.raises(UsageError):
        convex_combination([(0.4, mu), (0.4, nu)])


def test_symmetrize(Z, H, metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 40)
    from stablewalk.engine import convolve, ConvolutionPlan
    assert same(symmetrize_multiplicative(mu), convolve(mu, mu, ConvolutionPlan(), symmetric=True))
    rng = np.random.default_rng(3)
    rows = rng.integers(-2, 3, size=(12, 3))
    skew = SparseMeasure.from_rows(H, rows, rng.random(12))
    skew = SparseMeasure.from_rows(H, skew.rows, skew.masses / skew.total)
    s = symmetrize_multiplicative(skew)
    s.check_invariants()
    assert np.array_equal(s.masses_at(H.inv(s.rows)), s.masses)


def test_symmetrize_tracks_dropped(H):
    nu = build_coordinatewise(build_psi(3, 1.0, 2), H.malcev_basis().basis, H)
    s = symmetrize_multiplicative(nu)
    assert s.total <= (1 - nu.dropped_mass) ** 2 + 1e-12
    assert math.isclose(s.total + s.dropped_mass, 1.0, abs_tol=1e-10)


def test_weak_moment(Z, metric_Z):
    assert weak_moment_stat(SparseMeasure.delta(Z), metric_Z, 1.0) == 0.0
    walk = SparseMeasure.uniform(Z, Z.generators)
    assert weak_moment_stat(walk, metric_Z, 1.0) == 1.0
    mu = build_mu_alpha(metric_Z, 1.0, 100)
    s = [weak_moment_stat(mu, metric_Z, a) for a in (0.5, 1.0, 1.5)]
    assert s[0] <= s[1] <= s[2]


def test_weak_moment_growth(metric_Z):
    at, above = [], []
    for R in (100, 1000, 10000):
        mu = build_mu_alpha(metric_Z, 1.0, R)
        at.append(weak_moment_stat(mu, metric_Z, 1.0))
        above.append(weak_moment_stat(mu, metric_Z, 1.5))
    assert max(at) / min(at) < 1.2
    assert above[2] > 5 * above[0]


def test_check_U(Z, metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 100)
    rep = check_U(mu, metric_Z, 1.0)
    assert rep.passed
    assert rep.rows[0]["tail_stat"] < 2
    walk = SparseMeasure.uniform(Z, Z.generators)
    assert check_U(walk, metric_Z, 1.0).rows[0]["second_moment_stat"] == 1.0
    delta = check_U(SparseMeasure.delta(Z), metric_Z, 1.0).rows[0]
    assert delta["tail_stat"] == 0 and delta["second_moment_stat"] == 0


def test_check_BL_and_L(Z, metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 1000)
    A = 2.0
    balls = [(Z.element([2**k]), 2**k // 2) for k in range(1, 8)]
    assert check_BL(mu, metric_Z, A, 0.1, balls, alpha=1.0).passed
    # remove the annulus around 2^3: the lower bound fails at k = 3
    keep = np.abs(mu.rows[:, 0]) < 4
    keep |= np.abs(mu.rows[:, 0]) > 12
    holed = SparseMeasure.from_rows(Z, mu.rows[keep], mu.masses[keep])
    rep = check_BL(holed, metric_Z, A, 0.1, balls, alpha=1.0)
    assert not rep.passed and not rep.rows[2]["mass_ok"]
    with pytest.warns(UserWarning):
        assert check_BL(mu, metric_Z, A, 0.1, [], alpha=1.0).passed
    sets = [metric_Z.group.elements(np.arange(2**k, 2**(k + 1))[:, None]) for k in range(1, 6)]
    assert check_L(mu, metric_Z, A, 0.1, sets, alpha=1.0).passed
    singles = [[Z.element([2**k])] for k in range(1, 6)]
    assert not check_L(mu, metric_Z, A, 0.1, singles, alpha=1.0).passed


def test_check_L_even_points(Z, metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 1000)
    even = mu.rows[:, 0] % 2 == 0
    nu = SparseMeasure.from_rows(Z, mu.rows[even], mu.masses[even] / mu.masses[even].sum())
    sets = [Z.elements(np.arange(2**k, 2**(k + 1), 2)[:, None]) for k in range(1, 8)]
    assert check_L(nu, metric_Z, 2.0, 0.1, sets, alpha=1.0, card_const=0.5).passed


def test_gjp_simple_walk(Z):
    walk = SparseMeasure.uniform(Z, Z.generators)
    p = gjp_profile(walk, 50)
    assert p.K[0] == 1.0
    assert np.allclose(p.K, 1.0 / p.m.astype(float) ** 2)
    assert (p.G[1:] == 0).all()


def test_gjp_profile(Z, metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 10**5)
    p = gjp_profile(mu, 10**5)
    assert math.isclose(p.K[0], mu.mass(Z.element([1])) * 2, rel_tol=1e-12)
    assert (np.diff(p.Q) <= 1e-15).all()
    n = np.array([100, 300, 1000, 3000, 10000])
    slope = np.polyfit(np.log(n), np.log(p.a(n)), 1)[0]
    assert abs(slope - 1) <= 0.1
    with pytest.raises(UsageError):
        gjp_profile(mu, 10).a([10**6])


def test_sampler_frequencies(Z):
    rng = np.random.default_rng(0)
    w = np.array([0.5, 0.25, 0.125, 0.125])
    s = Sampler(Z, np.arange(4)[:, None], w)
    draws = s.draw_indices(200_000, rng)
    freq = np.bincount(draws, minlength=4) / len(draws)
    assert np.allclose(freq, w, atol=4 * np.sqrt(w * (1 - w) / len(draws)).max())


def test_sampler_psi_symmetric(Z):
    psi = build_psi(1, 1.0, 50)
    s = Sampler.from_psi(psi, (Z.element([1]),), Z)
    assert s.bias_bound == psi.tail_mass
    x = s.draw_rows(100_000, np.random.default_rng(1))[:, 0]
    assert abs((x > 0).mean() - (x < 0).mean()) < 0.01


def test_from_rows_symmetrizes(Z):
    m = SparseMeasure.from_rows(Z, [[1], [-1]], [0.6, 0.4], symmetric=True)
    assert m.masses.tolist() == [0.5, 0.5]


def test_invariants_detect_asymmetry(Z):
    # from_rows would average the pair; build the raw record instead
    bad = SparseMeasure(Z, np.array([[-1], [1]]), np.array([0.4, 0.6]), symmetric=True)
    with pytest.raises(DomainError):
        bad.check_invariants()
