"""Finitely generated groups with integer canonical forms.

Every group works on batches: elements are int64 rows and ``mul``/``inv``
act row-wise on (N, dim) arrays.  ``GroupElement`` wraps a single row for
scalar use.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import UsageError
from .magnus import free_nilpotent_coordinates
from .rows import as_rows


@dataclass(frozen=True)
class GroupElement:
    group: "Group"
    coords: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.group.key == other.group.key and self.coords == other.coords

    def __hash__(self):
        return hash((self.group.key, self.coords))

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return self.group.multiply(self, other)

    def __pow__(self, n: int) -> "GroupElement":
        return self.group.power(self, n)

    def inverse(self) -> "GroupElement":
        return self.group.invert(self)

    @property
    def row(self) -> np.ndarray:
        return np.array(self.coords, dtype=np.int64)

    def __repr__(self):
        return f"{self.group.key}{self.coords}"


class Group:
    """Base class.  Subclasses define ``mul`` and ``inv`` on row batches."""

    key: str
    name: str
    dim: int
    nilpotent: bool = True
    known_growth_degree: int | None = None
    # (ti, tj, tk): product is c = a + b with c[tk] += a[ti] * b[tj]
    bilinear: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    # -- batch interface -------------------------------------------------
    def mul(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inv(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def identity_rows(self, n: int = 1) -> np.ndarray:
        return np.zeros((n, self.dim), dtype=np.int64)

    def power_rows(self, X: np.ndarray, e) -> np.ndarray:
        """Row-wise integer powers X[i] ** e[i]."""
        X = as_rows(X)
        e = np.broadcast_to(np.asarray(e, dtype=np.int64), (X.shape[0],)).copy()
        base = np.where((e < 0)[:, None], self.inv(X), X)
        e = np.abs(e)
        out = self.identity_rows(X.shape[0])
        while e.any():
            odd = (e & 1).astype(bool)
            if odd.any():
                out[odd] = self.mul(out[odd], base[odd])
            e >>= 1
            live = e > 0
            if live.any():
                base[live] = self.mul(base[live], base[live])
        return out

    def product_bounds(self, loA, hiA, loB, hiB):
        """Coordinate box containing every product a*b; None if unknown."""
        if self.bilinear is None:
            return None
        lo = np.asarray(loA, dtype=object) + np.asarray(loB, dtype=object)
        hi = np.asarray(hiA, dtype=object) + np.asarray(hiB, dtype=object)
        ti, tj, tk = self.bilinear
        for i, j, k in zip(ti, tj, tk):
            corners = [int(loA[i]) * int(loB[j]), int(loA[i]) * int(hiB[j]),
                       int(hiA[i]) * int(loB[j]), int(hiA[i]) * int(hiB[j])]
            lo[k] += min(corners)
            hi[k] += max(corners)
        return lo, hi

    def exact_length(self, X: np.ndarray) -> np.ndarray | None:
        """Closed-form word length over the standard generators, if known."""
        return None

    # -- scalar interface ------------------------------------------------
    def element(self, coords) -> GroupElement:
        coords = tuple(int(c) for c in np.asarray(coords).ravel())
        if len(coords) != self.dim:
            raise UsageError(f"{self.key} elements have {self.dim} coordinates")
        return GroupElement(self, coords)

    def elements(self, rows) -> list[GroupElement]:
        return [GroupElement(self, tuple(r)) for r in as_rows(rows).tolist()]

    @property
    def identity(self) -> GroupElement:
        return self.element(self.identity_rows(1)[0])

    def _check(self, *elts: GroupElement):
        for g in elts:
            if not isinstance(g, GroupElement) or g.group.key != self.key:
                raise UsageError(f"element {g!r} does not belong to {self.key}")

    def multiply(self, g: GroupElement, h: GroupElement) -> GroupElement:
        self._check(g, h)
        return self.element(self.mul(g.row[None], h.row[None])[0])

    def invert(self, g: GroupElement) -> GroupElement:
        self._check(g)
        return self.element(self.inv(g.row[None])[0])

    def power(self, g: GroupElement, n: int) -> GroupElement:
        self._check(g)
        return self.element(self.power_rows(g.row[None], [n])[0])

    def commutator(self, g: GroupElement, h: GroupElement) -> GroupElement:
        """[g, h] = g h g^-1 h^-1."""
        return g * h * g.inverse() * h.inverse()

    # -- generators --------------------------------------------------------
    def named_generators(self) -> dict[str, GroupElement]:
        """Positive generators by name (inverses are added in ``generators``)."""
        raise NotImplementedError

    def named(self, name: str) -> GroupElement:
        name = name.strip()
        inverse = False
        if name.endswith("^-1"):
            name, inverse = name[:-3], True
        table = self.named_elements()
        if name not in table:
            raise UsageError(f"{self.key} has no element named {name!r}; "
                             f"known: {sorted(table)}")
        g = table[name]
        return g.inverse() if inverse else g

    def named_elements(self) -> dict[str, GroupElement]:
        return dict(self.named_generators())

    @property
    def generators(self) -> tuple[GroupElement, ...]:
        """Symmetric generating tuple: each generator followed by its inverse."""
        out = []
        for g in self.named_generators().values():
            out.append(g)
            if g.inverse() != g:
                out.append(g.inverse())
        return tuple(out)

    def generator_rows(self) -> np.ndarray:
        return np.array([g.coords for g in self.generators], dtype=np.int64)

    def malcev_basis(self):
        from .polycyclic import MalcevBasis
        return MalcevBasis.default_for(self)

    def __repr__(self):
        return f"<{self.name}>"


class FreeAbelian(Group):
    def __init__(self, d: int):
        if d < 1:
            raise UsageError("Z^d needs d >= 1")
        self.dim = d
        self.key = f"Z^{d}"
        self.name = f"free abelian group Z^{d}"
        self.known_growth_degree = d
        empty = np.zeros(0, dtype=np.int64)
        self.bilinear = (empty, empty, empty)

    def mul(self, X, Y):
        return np.add(X, Y)

    def inv(self, X):
        return np.negative(X)

    def power_rows(self, X, e):
        e = np.asarray(e, dtype=np.int64).reshape(-1, 1)
        return as_rows(X) * e

    def exact_length(self, X):
        return np.abs(as_rows(X)).sum(axis=1)

    def named_generators(self):
        out = {}
        for i in range(self.dim):
            row = np.zeros(self.dim, dtype=np.int64)
            row[i] = 1
            out[f"e{i + 1}"] = self.element(row)
        return out


class Unipotent(Group):
    """Upper unitriangular n x n integer matrices.

    Coordinates are the strictly upper entries in row-major order
    (a12, a13, ..., a1n, a23, ...).  Heisenberg is ``Unipotent(3)`` with
    coordinates (a12, a13, a23).
    """

    def __init__(self, n: int):
        if n < 2:
            raise UsageError("unipotent groups need n >= 2")
        self.n = n
        self.pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        self.pos = {p: k for k, p in enumerate(self.pairs)}
        self.dim = len(self.pairs)
        self.key = "heisenberg3" if n == 3 else f"unipotent{n}"
        self.name = "discrete Heisenberg group" if n == 3 else f"unipotent group U{n}(Z)"
        self.known_growth_degree = sum(k * (n - k) for k in range(1, n))
        ti, tj, tk = [], [], []
        for (i, j), k in self.pos.items():
            for m in range(i + 1, j):
                ti.append(self.pos[(i, m)])
                tj.append(self.pos[(m, j)])
                tk.append(k)
        self.bilinear = tuple(np.array(t, dtype=np.int64) for t in (ti, tj, tk))
        # entries grouped by distance to the diagonal, for the inverse recursion
        self._by_gap = [[(i, j) for (i, j) in self.pairs if j - i == g] for g in range(1, n)]

    def mul(self, X, Y):
        X = as_rows(X)
        Y = as_rows(Y)
        out = X + Y
        ti, tj, tk = self.bilinear
        for i, j, k in zip(ti, tj, tk):
            out[:, k] += X[:, i] * Y[:, j]
        return out

    def inv(self, X):
        X = as_rows(X)
        out = np.zeros_like(X)
        for pairs in self._by_gap:
            for (i, j) in pairs:
                acc = -X[:, self.pos[(i, j)]]
                for m in range(i + 1, j):
                    acc = acc - X[:, self.pos[(i, m)]] * out[:, self.pos[(m, j)]]
                out[:, self.pos[(i, j)]] = acc
        return out

    def to_matrix(self, row) -> np.ndarray:
        M = np.eye(self.n, dtype=np.int64)
        for (i, j), k in self.pos.items():
            M[i, j] = row[k]
        return M

    def from_matrix(self, M) -> GroupElement:
        M = np.asarray(M, dtype=np.int64)
        if not np.array_equal(np.tril(M), np.eye(self.n, dtype=np.int64)):
            raise UsageError("matrix is not upper unitriangular")
        return self.element([M[i, j] for (i, j) in self.pairs])

    def elementary(self, i: int, j: int) -> GroupElement:
        """The elementary matrix M_ij (1-based indices)."""
        row = np.zeros(self.dim, dtype=np.int64)
        row[self.pos[(i - 1, j - 1)]] = 1
        return self.element(row)

    def named_generators(self):
        if self.n == 3:
            return {"a": self.elementary(1, 2), "b": self.elementary(2, 3)}
        return {f"M{i}{i + 1}": self.elementary(i, i + 1) for i in range(1, self.n)}

    def named_elements(self):
        out = {}
        for (i, j) in self.pairs:
            out[f"M{i + 1}{j + 1}"] = self.elementary(i + 1, j + 1)
        if self.n == 3:
            out.update(a=self.elementary(1, 2), b=self.elementary(2, 3),
                       c=self.elementary(1, 3))
        return out


def Heisenberg() -> Unipotent:
    return Unipotent(3)


class DihedralTimesZ(Group):
    """D_inf x Z with D_inf = <u, v | u^2 = v^2 = 1>.

    An element r^k u^f z^m (r = uv, f in {0, 1}) is stored as (k, f, m).
    """

    dim = 3
    key = "dihedralxZ"
    name = "infinite dihedral group times Z"
    nilpotent = False
    known_growth_degree = 2

    def mul(self, X, Y):
        X, Y = as_rows(X), as_rows(Y)
        sign = 1 - 2 * X[:, 1]
        return np.stack([X[:, 0] + sign * Y[:, 0], X[:, 1] ^ Y[:, 1], X[:, 2] + Y[:, 2]], axis=1)

    def inv(self, X):
        X = as_rows(X)
        k = np.where(X[:, 1] == 1, X[:, 0], -X[:, 0])
        return np.stack([k, X[:, 1], -X[:, 2]], axis=1)

    def product_bounds(self, loA, hiA, loB, hiB):
        lo = [int(loA[0]) + min(int(loB[0]), -int(hiB[0])), 0, int(loA[2]) + int(loB[2])]
        hi = [int(hiA[0]) + max(int(hiB[0]), -int(loB[0])), 1, int(hiA[2]) + int(hiB[2])]
        return np.array(lo, dtype=object), np.array(hi, dtype=object)

    def named_generators(self):
        return {"u": self.element([0, 1, 0]), "v": self.element([-1, 1, 0]),
                "z": self.element([0, 0, 1])}

    def named_elements(self):
        out = self.named_generators()
        out["r"] = self.element([1, 0, 0])
        out["uv"] = out["r"]
        return out

    # finite-index nilpotent subgroup N = <uv> x <z> and coset representatives
    def nilpotent_subgroup(self):
        g = self.named_elements()
        return (g["r"], g["z"]), (self.identity, g["u"])

    def in_nilpotent_subgroup(self, X) -> np.ndarray:
        return as_rows(X)[:, 1] == 0

    def malcev_basis(self):
        from .polycyclic import MalcevBasis
        return MalcevBasis(self, self.nilpotent_subgroup()[0], names=("uv", "z"))


class FreeNilpotent(Group):
    """Free nilpotent group of class c on m generators, in Mal'cev coordinates
    over the basic commutators."""

    def __init__(self, m: int, c: int):
        if m < 1 or c < 1:
            raise UsageError("free_nilpotent needs m >= 1 and c >= 1")
        self.m, self.c = m, c
        self.coords = free_nilpotent_coordinates(m, c)
        self.dim = self.coords.rank
        self.key = f"free_nilpotent({m},{c})"
        self.name = f"free nilpotent group of class {c} on {m} generators"
        self.known_growth_degree = sum(b.length for b in self.coords.comms)

    def mul(self, X, Y):
        alg = self.coords.alg
        return self.coords.peel(alg.mul(self.coords.compose(X), self.coords.compose(Y)))

    def inv(self, X):
        return self.coords.peel(self.coords.alg.inv(self.coords.compose(X)))

    def power_rows(self, X, e):
        X = as_rows(X)
        e = np.broadcast_to(np.asarray(e, dtype=np.int64), (X.shape[0],))
        S = self.coords.compose(X)
        out = np.empty_like(X)
        # rows are handled one at a time because Magnus powers need a fixed base
        for i in range(X.shape[0]):
            out[i] = self.coords.peel(self.coords.alg.power(S[i:i + 1], [e[i]]))[0]
        return out

    def named_generators(self):
        out = {}
        for i in range(self.m):
            row = np.zeros(self.dim, dtype=np.int64)
            row[i] = 1
            out[f"x{i + 1}"] = self.element(row)
        return out

    def named_elements(self):
        from .magnus import bracket_string
        out = {}
        for i in range(self.dim):
            row = np.zeros(self.dim, dtype=np.int64)
            row[i] = 1
            out[bracket_string(self.coords.comms, i)] = self.element(row)
        return out


_KEY_PATTERNS = [
    (re.compile(r"^Z\^(\d+)$"), lambda m: FreeAbelian(int(m.group(1)))),
    (re.compile(r"^heisenberg3$"), lambda m: Unipotent(3)),
    (re.compile(r"^unipotent(\d+)$"), lambda m: Unipotent(int(m.group(1)))),
    (re.compile(r"^dihedralxZ$"), lambda m: DihedralTimesZ()),
    (re.compile(r"^free_nilpotent\((\d+),\s*(\d+)\)$"),
     lambda m: FreeNilpotent(int(m.group(1)), int(m.group(2)))),
]

GROUP_KEYS = ("Z^d", "heisenberg3", "unipotent<n>", "dihedralxZ", "free_nilpotent(m,c)")


@lru_cache(maxsize=None)
def get_group(key: str) -> Group:
    """Group descriptor from its config key, e.g. ``"Z^2"`` or ``"free_nilpotent(2,3)"``."""
    for pattern, make in _KEY_PATTERNS:
        m = pattern.match(key.strip())
        if m:
            return make(m)
    raise UsageError(f"unknown group {key!r}; expected one of {', '.join(GROUP_KEYS)}")
