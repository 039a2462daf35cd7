"""Basic commutators and truncated Magnus series for free nilpotent groups.

A free nilpotent group of class c on m letters embeds faithfully into the
units 1 + A of the ring of non-commutative integer polynomials in m
variables truncated above degree c (send x_i to 1 + X_i).  Series are stored
as int64 rows holding the coefficients of every non-empty word of length at
most c; the constant term 1 is implicit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

from .errors import DomainError, UsageError


@dataclass(frozen=True)
class BasicCommutator:
    """A bracket tree over letters 0..m-1 (letters are printed 1-based)."""

    left: int | None  # order index of the left factor, None for letters
    right: int | None
    letter: int | None
    length: int
    order_index: int

    def is_letter(self) -> bool:
        return self.letter is not None


def basic_commutators(m: int, c: int) -> list[BasicCommutator]:
    """All basic commutators of length <= c over m letters in inductive order.

    Length-1 commutators are the letters x1 < ... < xm.  A bracket [bi, bj]
    is basic when bi > bj and, if bi = [bs, bt], also bj >= bt.  Brackets of
    equal length are ordered by (left index, right index).
    """
    if m < 1 or c < 1:
        raise UsageError("basic_commutators needs m >= 1 and c >= 1")
    out: list[BasicCommutator] = [
        BasicCommutator(None, None, i, 1, i) for i in range(m)
    ]
    for length in range(2, c + 1):
        fresh = []
        for i, bi in enumerate(out):
            for j, bj in enumerate(out):
                if bi.length + bj.length != length or not i > j:
                    continue
                if not bi.is_letter() and not j >= bi.right:
                    continue
                fresh.append((i, j))
        fresh.sort()
        for i, j in fresh:
            out.append(BasicCommutator(i, j, None, length, len(out)))
    return out


def bracket_string(comms: list[BasicCommutator], idx: int) -> str:
    b = comms[idx]
    if b.is_letter():
        return f"x{b.letter + 1}"
    return f"[{bracket_string(comms, b.left)},{bracket_string(comms, b.right)}]"


class MagnusAlgebra:
    """Truncated series 1 + A with vectorized product, inverse and powers."""

    def __init__(self, m: int, c: int):
        self.m, self.c = m, c
        self.words: list[tuple[int, ...]] = []
        for length in range(1, c + 1):
            self.words.extend(itertools.product(range(m), repeat=length))
        self.index = {w: i for i, w in enumerate(self.words)}
        self.width = len(self.words)
        self.length_of = np.array([len(w) for w in self.words])
        self.blocks = {
            L: np.flatnonzero(self.length_of == L) for L in range(1, c + 1)
        }
        # (u, v, w) with w the concatenation uv; grouped by len(w)
        trip = []
        for w, iw in self.index.items():
            for cut in range(1, len(w)):
                trip.append((self.index[w[:cut]], self.index[w[cut:]], iw))
        self.triples = np.array(trip, dtype=np.int64).reshape(-1, 3)

    def zeros(self, n: int) -> np.ndarray:
        return np.zeros((n, self.width), dtype=np.int64)

    def letter(self, i: int) -> np.ndarray:
        s = self.zeros(1)
        s[0, self.index[(i,)]] = 1
        return s

    def _pure(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Product of the non-constant parts only (no linear terms)."""
        C = np.zeros((max(A.shape[0], B.shape[0]), self.width), dtype=np.int64)
        if self.triples.size:
            u, v, w = self.triples.T
            np.add.at(C.T, w, (A[:, u] * B[:, v]).T)
        return C

    def mul(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return A + B + self._pure(A, B)

    def inv(self, A: np.ndarray) -> np.ndarray:
        # (1+A)^{-1} = sum_j (-A)^j, finite because A is nilpotent
        out = -A
        term = -A
        for _ in range(2, self.c + 1):
            term = self._pure(term, -A)
            out = out + term
        return out

    def power(self, B: np.ndarray, x: np.ndarray) -> np.ndarray:
        """(1+B)^x for a single series B and integer exponents x (vector)."""
        x = np.asarray(x, dtype=np.int64).reshape(-1, 1)
        out = np.zeros((x.shape[0], self.width), dtype=np.int64)
        term = B
        for j in range(1, self.c + 1):
            if not term.any():
                break
            out += _binom(x, j) * term
            term = self._pure(term, B)
        return out

    def commutator(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """[g, h] = g h g^-1 h^-1."""
        return self.mul(self.mul(self.mul(A, B), self.inv(A)), self.inv(B))


def _binom(x: np.ndarray, j: int) -> np.ndarray:
    num = np.ones_like(x)
    for t in range(j):
        num = num * (x - t)
    return num // factorial(j)


class FreeNilpotentCoordinates:
    """Mal'cev coordinates over basic commutators, computed through Magnus series."""

    def __init__(self, m: int, c: int):
        self.alg = MagnusAlgebra(m, c)
        self.comms = basic_commutators(m, c)
        self.rank = len(self.comms)
        series = []
        for b in self.comms:
            if b.is_letter():
                series.append(self.alg.letter(b.letter))
            else:
                series.append(self.alg.commutator(series[b.left], series[b.right]))
        self.series = series
        self.by_length: dict[int, list[int]] = {}
        for b in self.comms:
            self.by_length.setdefault(b.length, []).append(b.order_index)
        # leading homogeneous parts (Lie polynomials) per length
        self.lead = {}
        for L, idxs in self.by_length.items():
            cols = self.alg.blocks[L]
            mat = np.stack([self.series[i][0, cols] for i in idxs], axis=1)
            self.lead[L] = mat.astype(float)

    def compose(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        out = self.alg.zeros(X.shape[0])
        for i in range(self.rank):
            if X[:, i].any():
                out = self.alg.mul(out, self.alg.power(self.series[i], X[:, i]))
        return out

    def peel(self, S: np.ndarray) -> np.ndarray:
        """Mal'cev coordinates of the group elements with series S."""
        S = np.array(S, dtype=np.int64, copy=True)
        X = np.zeros((S.shape[0], self.rank), dtype=np.int64)
        for L in range(1, self.alg.c + 1):
            idxs = self.by_length.get(L, [])
            cols = self.alg.blocks[L]
            block = S[:, cols]
            if not idxs:
                if block.any():
                    raise DomainError("series is not in the free nilpotent group")
                continue
            sol, *_ = np.linalg.lstsq(self.lead[L], block.T.astype(float), rcond=None)
            x = np.rint(sol.T).astype(np.int64)
            if not np.array_equal(
                np.rint(self.lead[L] @ x.T.astype(float)).astype(np.int64), block.T
            ):
                raise DomainError("series is not in the free nilpotent group")
            for col, i in enumerate(idxs):
                X[:, i] = x[:, col]
                if x[:, col].any():
                    S = self.alg.mul(self.alg.power(self.series[i], -x[:, col]), S)
        if S.any():
            raise DomainError("series is not in the free nilpotent group")
        return X


@lru_cache(maxsize=None)
def free_nilpotent_coordinates(m: int, c: int) -> FreeNilpotentCoordinates:
    return FreeNilpotentCoordinates(m, c)
