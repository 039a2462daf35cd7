import numpy as np
import pytest
from hypothesis import given, strategies as st

from stablewalk.errors import DomainError
from stablewalk.groups import get_group
from stablewalk.magnus import basic_commutators, bracket_string
from stablewalk.metric import WordMetric
from stablewalk.polycyclic import (MalcevBasis, malcev_compose, malcev_coordinates, pi_S,
                                   pi_S_rows, unipotent4_inverse_coordinates,
                                   unipotent4_matrix_tuple)

U4_ENTRIES = [(0, 3), (1, 3), (2, 3), (0, 2), (1, 2), (0, 1)]


def names(m, c):
    b = basic_commutators(m, c)
    return [bracket_string(b, i) for i in range(len(b))]


def test_basic_commutators_three_letters():
    assert names(3, 3) == [
        "x1", "x2", "x3", "[x2,x1]", "[x3,x1]", "[x3,x2]",
        "[[x2,x1],x1]", "[[x2,x1],x2]", "[[x2,x1],x3]", "[[x3,x1],x1]",
        "[[x3,x1],x2]", "[[x3,x1],x3]", "[[x3,x2],x2]", "[[x3,x2],x3]",
    ]


@pytest.mark.parametrize("c", [1, 2, 5])
def test_single_letter(c):
    assert names(1, c) == ["x1"]


def test_two_letters_class_two():
    assert names(2, 2) == ["x1", "x2", "[x2,x1]"]


def _mobius(n):
    out, p = 1, 2
    while p * p <= n:
        if n % p == 0:
            n //= p
            if n % p == 0:
                return 0
            out = -out
        p += 1
    return -out if n > 1 else out


def _witt(m, n):
    # number of basic commutators of length exactly n (necklace polynomial)
    return sum(_mobius(d) * m ** (n // d) for d in range(1, n + 1) if n % d == 0) // n


@pytest.mark.parametrize("m,c", [(2, 5), (3, 4), (4, 3)])
def test_basic_commutator_rules(m, c):
    b = basic_commutators(m, c)
    for n in range(1, c + 1):
        assert sum(x.length == n for x in b) == _witt(m, n)
    for x in b:
        if x.is_letter():
            continue
        left, right = b[x.left], b[x.right]
        assert x.length == left.length + right.length
        assert x.left > x.right
        if not left.is_letter():
            assert x.right >= left.right
    # prefix stable in c
    assert names(m, c)[: len(names(m, c - 1))] == names(m, c - 1)


@pytest.mark.parametrize("key,radius", [("heisenberg3", 5), ("unipotent4", 3),
                                        ("free_nilpotent(2,3)", 3), ("Z^2", 4)])
def test_coordinate_round_trip(key, radius):
    g = get_group(key)
    basis = MalcevBasis.default_for(g) if key != "dihedralxZ" else g.malcev_basis()
    M = WordMetric(g, radius_cap=radius)
    rows = M.ball_rows(radius)
    coords = basis.coordinates_rows(rows)
    assert np.array_equal(basis.compose_rows(coords), rows)
    # uniqueness: distinct elements, distinct coordinates
    assert len(np.unique(coords, axis=0)) == len(rows)
    for x in g.elements(rows[:20]):
        assert malcev_compose(malcev_coordinates(x, basis), basis) == x


def test_identity_coordinates(H):
    basis = MalcevBasis.default_for(H)
    assert basis.coordinates(H.identity) == (0, 0, 0)


def test_heisenberg_commutator_coordinates(H):
    basis = MalcevBasis.default_for(H)
    a, b = basis.basis[0], basis.basis[1]
    assert basis.coordinates(a * b * a.inverse() * b.inverse()) == (0, 0, 1)


@pytest.mark.parametrize("key", ["heisenberg3", "unipotent4", "free_nilpotent(3,2)"])
def test_commutator_table(key):
    g = get_group(key)
    basis = MalcevBasis.default_for(g)
    for (i, j), c in basis.commutator_table.items():
        assert c is not None
        assert basis.compose(c) == g.commutator(basis.basis[i], basis.basis[j])


def test_dihedral_basis_rejects_outside_elements(D):
    basis = D.malcev_basis()
    assert basis.names == ("uv", "z")
    with pytest.raises(DomainError):
        basis.coordinates(D.named("u"))


def test_pi_S_zero_is_identity(U4):
    S = unipotent4_matrix_tuple(U4)
    assert pi_S([0] * 6, S) == U4.identity


@given(st.lists(st.integers(-5, 5), min_size=6, max_size=6))
def test_pi_S_matrix_form(a):
    U4 = get_group("unipotent4")
    S = unipotent4_matrix_tuple(U4)
    want = np.eye(4, dtype=np.int64)
    for (i, j), v in zip(U4_ENTRIES, a):
        want[i, j] = v
    assert np.array_equal(U4.to_matrix(pi_S(a, S).row), want)


def test_inverse_coordinates_all_ones(U4):
    S = unipotent4_matrix_tuple(U4)
    a = np.ones(6, dtype=np.int64)
    # (I + N)^-1 = I - N + N^2 - N^3 with N the strict upper all-ones matrix,
    # so the (1,4) entry is -1 + 2 - 1 = 0
    b = unipotent4_inverse_coordinates(a)
    assert b.tolist() == [0, 0, -1, 0, -1, -1]
    assert pi_S(a, S) * pi_S(b, S) == U4.identity
    # dropping the a12*a24 term would give -1 in the first slot, which is not an inverse
    assert pi_S(a, S) * pi_S([-1, 0, -1, 0, -1, -1], S) != U4.identity


def test_inverse_coordinates_random(U4):
    S_rows = np.array([s.coords for s in unipotent4_matrix_tuple(U4)])
    A = np.random.default_rng(7).integers(-5, 6, size=(1000, 6))
    X = pi_S_rows(A, S_rows, U4)
    Y = pi_S_rows(unipotent4_inverse_coordinates(A), S_rows, U4)
    assert not U4.mul(X, Y).any()
    # matrix oracle: the inverse matrix read off in the same entry order
    for a, x in zip(A[:100], X[:100]):
        inv = np.linalg.inv(U4.to_matrix(x)).round().astype(np.int64)
        assert [inv[i, j] for i, j in U4_ENTRIES] == unipotent4_inverse_coordinates(a).tolist()
