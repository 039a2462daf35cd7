import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stablewalk.engine import (ConvolutionPlan, convolve, fit_exponent, largest_certified_window,
                               near_diagonal_check, power, return_series)
from stablewalk.errors import BudgetExceeded, CertificationError, UsageError
from stablewalk.groups import get_group
from stablewalk.measures import (SparseMeasure, build_coordinatewise, build_mu_alpha, build_psi,
                                 convex_combination)
from stablewalk.metric import WordMetric

PLAN = ConvolutionPlan()


def fourier_return(masses_by_z: dict, n: int) -> float:
    """mu^(n)(0) on Z as the mean of phi^n over an alias-free DFT grid."""
    zs = np.array(list(masses_by_z))
    N = 1 << int(math.ceil(math.log2(n * (np.abs(zs).max() * 2 + 1) + 1)))
    buf = np.zeros(N)
    np.add.at(buf, zs % N, np.array(list(masses_by_z.values())))
    phi = np.fft.rfft(buf).real  # symmetric measure: phi is real
    w = np.full(len(phi), 2.0)
    w[0] = 1.0
    if N % 2 == 0:
        w[-1] = 1.0
    return float((w * phi**n).sum() / N)


def double_sum(mu, nu):
    g = mu.group
    out = {}
    for x, a in mu.support.items():
        for y, b in nu.support.items():
            out[x * y] = out.get(x * y, 0.0) + a * b
    return out


def test_delta_identity(H):
    nu = build_coordinatewise(build_psi(3, 1.0, 2), H.malcev_basis().basis, H)
    d = SparseMeasure.delta(H)
    for out in (convolve(d, nu, PLAN), convolve(nu, d, PLAN)):
        assert np.array_equal(out.rows, nu.rows)
        assert np.array_equal(out.masses, nu.masses)


def test_simple_walk(Z):
    walk = SparseMeasure.uniform(Z, Z.generators)
    assert convolve(walk, walk, PLAN).mass(Z.identity) == 0.5
    assert power(walk, 1, PLAN).masses.tolist() == walk.masses.tolist()
    assert power(walk, 4, PLAN).mass(Z.identity) == 0.375
    s = return_series(walk, [2, 4], PLAN)
    assert s.value.tolist() == [0.5, 0.375]
    assert (s.lo == s.hi).all()


def test_delta_series_is_constant(Z):
    s = return_series(SparseMeasure.delta(Z), [1, 2, 8, 64], PLAN)
    assert s.value.tolist() == [1.0] * 4
    assert fit_exponent(s, None) == (0.0, 0.0)


small_measure = st.lists(
    st.tuples(st.integers(-2, 2), st.integers(-2, 2), st.integers(-3, 3),
              st.floats(0.01, 1.0)), min_size=1, max_size=6)


def _heis(entries):
    H = get_group("heisenberg3")
    rows = np.array([e[:3] for e in entries])
    w = np.array([e[3] for e in entries])
    mu = SparseMeasure.from_rows(H, rows, w)
    return SparseMeasure.from_rows(H, mu.rows, mu.masses / mu.total)


@given(small_measure, small_measure)
def test_convolution_against_double_sum(a, b):
    mu, nu = _heis(a), _heis(b)
    out = convolve(mu, nu, ConvolutionPlan(prune_threshold=0))
    want = double_sum(mu, nu)
    got = out.support
    assert set(got) == {g for g, v in want.items() if v > 0}
    for g, v in want.items():
        assert math.isclose(got[g], v, rel_tol=1e-12)
    # (mu * nu)(g) = (reflect(nu) * reflect(mu))(g^-1)
    rev = convolve(nu.reflect(), mu.reflect(), ConvolutionPlan(prune_threshold=0))
    for g, v in got.items():
        assert math.isclose(rev.mass(g.inverse()), v, rel_tol=1e-12)


@pytest.mark.parametrize("backend", ["sparse", "numpy", "lattice"])
def test_backends_agree(Z2, backend):
    mu = build_mu_alpha(WordMetric(Z2), 1.0, 12)
    ref = convolve(mu, mu, ConvolutionPlan(prune_threshold=0, backend="numpy"), symmetric=True)
    out = convolve(mu, mu, ConvolutionPlan(prune_threshold=0, backend=backend), symmetric=True)
    at = out.masses_at(ref.rows)
    if backend == "lattice":
        # FFT cells are shifted down by the rounding allowance, so the
        # product never overstates a mass and the shortfall is booked
        gap = ref.masses - at
        assert (gap >= -1e-18).all()
        assert gap.sum() <= out.dropped_mass + 1e-15
        assert out.dropped_mass < 1e-9
    else:
        assert np.allclose(at, ref.masses, rtol=1e-12, atol=0)
    out.check_invariants(tol=1e-10)


def test_product_structure_on_Z2(Z, Z2):
    p = {-2: 0.1, -1: 0.2, 0: 0.4, 1: 0.2, 2: 0.1}
    one = SparseMeasure.from_rows(Z, [[z] for z in p], list(p.values()), symmetric=True)
    rows = [[x, y] for x in p for y in p]
    prod = SparseMeasure.from_rows(Z2, rows, [p[x] * p[y] for x, y in rows], symmetric=True)
    exact = ConvolutionPlan(prune_threshold=0, backend="sparse")
    n_list = [2, 5, 8]
    s = return_series(prod, n_list, PLAN)
    for n, lo, hi in zip(n_list, s.lo, s.hi):
        a = power(one, n, exact).mass(Z.identity)
        b = power(prod, n, exact).mass(Z2.identity)
        assert math.isclose(b, a * a, rel_tol=1e-13)
        assert lo * (1 - 1e-14) <= a * a <= hi * (1 + 1e-14)


def test_mu_alpha_against_fourier_oracle(Z, metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 10**4)
    n_list = [2, 4, 8, 16, 32, 64]
    s = return_series(mu, n_list, PLAN)
    table = dict(zip(mu.rows[:, 0].tolist(), mu.masses.tolist()))
    for n, lo, hi in zip(s.n, s.lo, s.hi):
        ref = fourier_return(table, int(n))
        slack = 1e-12 * ref
        assert lo - slack <= ref <= hi + slack, (n, lo, ref, hi)


@pytest.mark.parametrize("strategy", ["direct", "repeated-squaring"])
def test_series_invariants(Z, metric_Z, strategy):
    mu = build_mu_alpha(metric_Z, 1.0, 2000)
    plan = ConvolutionPlan(prune_threshold=1e-12, strategy=strategy)
    s = return_series(mu, [2, 4, 6, 8, 16, 32], plan)
    assert (s.lo <= s.value).all() and (s.value <= s.hi).all()
    # even times: non-increasing up to certified error
    assert (s.lo[1:] <= s.hi[:-1]).all()
    for n in (4, 7, 16):
        P = power(mu, n, plan)
        assert math.isclose(P.total + P.dropped_mass, 1.0, abs_tol=1e-10)


def test_squaring_consistency(H):
    nu = build_coordinatewise(build_psi(3, 1.0, 2), H.malcev_basis().basis, H)
    plan = ConvolutionPlan(prune_threshold=1e-12)
    half = power(nu, 3, plan)
    s = return_series(nu, [6], plan)
    val = float(np.dot(half.masses, half.masses))
    assert s.lo[0] <= val * (1 + 1e-12) and val <= s.hi[0] * (1 + 1e-12)
    assert s.hi[0] > s.lo[0]  # the psi tail is never forgotten


def test_pruning_is_accounted(metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 1000)
    loose = power(mu, 8, ConvolutionPlan(prune_threshold=1e-8))
    exact = power(mu, 8, ConvolutionPlan(prune_threshold=0))
    assert loose.dropped_mass > 0
    assert math.isclose(loose.total + loose.dropped_mass, 1.0, abs_tol=1e-10)
    assert (loose.masses <= exact.masses_at(loose.rows) * (1 + 1e-9)).all()


def test_budget_exceeded(metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 1000)
    with pytest.raises(BudgetExceeded) as exc:
        power(mu, 4, ConvolutionPlan(max_support_size=1000))
    assert exc.value.partial["support"] > 1000


def test_series_needs_symmetric(H):
    skew = SparseMeasure.from_rows(H, [[1, 0, 0]], [1.0])
    with pytest.raises(UsageError):
        return_series(skew, [2])
    with pytest.raises(UsageError):
        return_series(SparseMeasure.delta(H), [])


def test_lazy_walk_slope(Z):
    walk = SparseMeasure.uniform(Z, Z.generators)
    lazy = convex_combination([(0.5, SparseMeasure.delta(Z)), (0.5, walk)])
    s = return_series(lazy, [2**k for k in range(6, 13)], PLAN)
    slope, _ = fit_exponent(s, (64, 4096))
    assert abs(slope + 0.5) <= 0.1


def test_mu_alpha_slope(metric_Z):
    mu = build_mu_alpha(metric_Z, 1.0, 20000)
    s = return_series(mu, [2**k for k in range(6, 13)], PLAN)
    assert largest_certified_window(s) == (64, 4096)
    slope, _ = fit_exponent(s, (64, 4096))
    assert abs(slope + 1) <= 0.15


def test_fit_refuses_uncertified(Z, H):
    nu = build_coordinatewise(build_psi(3, 1.0, 1), H.malcev_basis().basis, H)
    s = return_series(nu, [2, 4, 6, 8, 10], PLAN)
    with pytest.raises(CertificationError):
        fit_exponent(s, None, max_rel=1e-6)
    with pytest.raises(CertificationError, match="need >= 4"):
        fit_exponent(s, (2, 4))


def test_near_diagonal(Z, metric_Z):
    walk = SparseMeasure.uniform(Z, Z.generators)
    lazy = convex_combination([(0.5, SparseMeasure.delta(Z)), (0.5, walk)])
    rep = near_diagonal_check(lazy, 1024, 0.5, metric_Z, 2.0)
    assert rep.spread < 4
    # the identity is included and matches the diagonal value
    e = np.flatnonzero(~rep.rows.any(axis=1))[0]
    assert math.isclose(rep.ratios[e], power(lazy, 1024).mass(Z.identity) * 1024 ** 0.5)
    mu = build_mu_alpha(metric_Z, 1.0, 20000)
    assert near_diagonal_check(mu, 256, 0.5, metric_Z, 1.0).spread < 10
