"""Mal'cev bases, normal-form coordinates and the product maps pi_S."""
from __future__ import annotations

import numpy as np

from .errors import DomainError, UsageError
from .groups import FreeAbelian, FreeNilpotent, Group, GroupElement, Unipotent
from .magnus import BasicCommutator, basic_commutators, bracket_string  # noqa: F401
from .rows import as_rows


class MalcevBasis:
    """Ordered tuple (u1, ..., un) with unique normal forms u1^x1 ... un^xn.

    Coordinates are recovered by peeling from the left: x_i is read off the
    pivot entry of u_i (its first nonzero canonical coordinate) and u_i^{x_i}
    is then removed.  The recomposed element is checked against the input, so
    a tuple for which peeling is not valid raises ``DomainError`` rather than
    returning wrong coordinates.
    """

    def __init__(self, group: Group, basis, names=None):
        self.group = group
        self.basis = tuple(b if isinstance(b, GroupElement) else group.named(b) for b in basis)
        for b in self.basis:
            group._check(b)
        self.names = tuple(names) if names else tuple(f"u{i + 1}" for i in range(len(self.basis)))
        self.rows = np.array([b.coords for b in self.basis], dtype=np.int64).reshape(-1, group.dim)
        self.pivots = []
        for b in self.basis:
            nz = np.flatnonzero(b.row)
            if nz.size == 0:
                raise UsageError("identity cannot be a basis element")
            self.pivots.append(int(nz[0]))
        self._identity_coords = (
            isinstance(group, FreeNilpotent)
            and np.array_equal(self.rows, np.eye(group.dim, dtype=np.int64))
        )
        self.commutator_table = self._commutators()

    @classmethod
    def default_for(cls, group: Group) -> "MalcevBasis":
        if isinstance(group, FreeAbelian):
            gens = group.named_generators()
            return cls(group, tuple(gens.values()), names=tuple(gens))
        if isinstance(group, Unipotent):
            # lower central series order: first superdiagonal first
            pairs = sorted(group.pairs, key=lambda p: (p[1] - p[0], p[0]))
            basis = [group.elementary(i + 1, j + 1) for i, j in pairs]
            if group.n == 3:
                names = ("a", "b", "c")
            else:
                names = tuple(f"M{i + 1}{j + 1}" for i, j in pairs)
            return cls(group, basis, names=names)
        if isinstance(group, FreeNilpotent):
            eye = np.eye(group.dim, dtype=np.int64)
            names = tuple(bracket_string(group.coords.comms, i) for i in range(group.dim))
            return cls(group, [group.element(r) for r in eye], names=names)
        raise UsageError(f"{group.key} has no default Mal'cev basis")

    def __len__(self):
        return len(self.basis)

    def _commutators(self):
        table = {}
        for i in range(len(self.basis)):
            for j in range(i + 1, len(self.basis)):
                comm = self.group.commutator(self.basis[i], self.basis[j])
                try:
                    table[(i, j)] = tuple(int(x) for x in self.coordinates_rows(comm.row[None])[0])
                except DomainError:
                    table[(i, j)] = None
        return table

    def coordinates_rows(self, X) -> np.ndarray:
        X = as_rows(X)
        if self._identity_coords:
            return X.copy()
        G = X.copy()
        out = np.zeros((len(X), len(self.basis)), dtype=np.int64)
        for i, (u, p) in enumerate(zip(self.rows, self.pivots)):
            x = G[:, p] // u[p] if abs(u[p]) != 1 else G[:, p] * u[p]
            out[:, i] = x
            if x.any():
                G = self.group.mul(self.group.power_rows(np.tile(u, (len(G), 1)), -x), G)
        bad = np.any(G != 0, axis=1)
        if bad.any() or not np.array_equal(self.compose_rows(out), X):
            raise DomainError("element is not expressible in this Mal'cev basis")
        return out

    def compose_rows(self, C) -> np.ndarray:
        return pi_S_rows(C, self.rows, self.group)

    def coordinates(self, g: GroupElement) -> tuple[int, ...]:
        self.group._check(g)
        return tuple(int(x) for x in self.coordinates_rows(g.row[None])[0])

    def compose(self, x) -> GroupElement:
        x = np.asarray(x, dtype=np.int64).reshape(1, -1)
        if x.shape[1] != len(self.basis):
            raise UsageError("coordinate vector has the wrong length")
        return self.group.element(self.compose_rows(x)[0])


def malcev_coordinates(g: GroupElement, basis: MalcevBasis) -> tuple[int, ...]:
    return basis.coordinates(g)


def malcev_compose(x, basis: MalcevBasis) -> GroupElement:
    return basis.compose(x)


def pi_S_rows(A, S_rows, group: Group) -> np.ndarray:
    """Row-wise products s1^a1 ... sk^ak for exponent rows A."""
    A = np.asarray(A, dtype=np.int64)
    if A.ndim == 1:
        A = A[None]
    S_rows = as_rows(S_rows)
    if A.shape[1] != S_rows.shape[0]:
        raise UsageError("exponent vector and tuple S differ in length")
    out = group.identity_rows(len(A))
    for i, s in enumerate(S_rows):
        if A[:, i].any():
            out = group.mul(out, group.power_rows(np.tile(s, (len(A), 1)), A[:, i]))
    return out


def pi_S(a, S) -> GroupElement:
    """The product s1^a1 ... sk^ak as a group element."""
    S = tuple(S)
    if not S:
        raise UsageError("tuple S is empty")
    group = S[0].group
    for s in S:
        group._check(s)
    a = np.asarray(a, dtype=np.int64).reshape(1, -1)
    if a.shape[1] != len(S):
        raise UsageError("|S| must equal the length of the exponent vector")
    rows = np.array([s.coords for s in S], dtype=np.int64)
    return group.element(pi_S_rows(a, rows, group)[0])


def unipotent4_matrix_tuple(group: Unipotent | None = None) -> tuple[GroupElement, ...]:
    """(M14, M24, M34, M13, M23, M12): exponents become the matrix entries."""
    group = group or Unipotent(4)
    return tuple(group.elementary(i, j) for i, j in
                 [(1, 4), (2, 4), (3, 4), (1, 3), (2, 3), (1, 2)])


def unipotent4_inverse_coordinates(a) -> np.ndarray:
    """Exponents a' with pi_S(a') = pi_S(a)^-1 for the matrix tuple of U4.

    Input and output are ordered (a14, a24, a34, a13, a23, a12).  The first
    entry is the (1,4) entry of the inverse matrix, which includes the
    a12*a24 term.
    """
    a = np.asarray(a, dtype=np.int64)
    a14, a24, a34, a13, a23, a12 = (a[..., i] for i in range(6))
    return np.stack([
        -a12 * a23 * a34 + a12 * a24 + a13 * a34 - a14,
        a23 * a34 - a24,
        -a34,
        a12 * a23 - a13,
        -a23,
        -a12,
    ], axis=-1)
