"""Lookup tables for integer coordinate rows.

Group elements are stored as rows of an int64 array.  ``RowIndex`` maps
rows to positions using mixed-radix int64 keys when the bounding box is
small enough, and falls back to raw-byte keys otherwise.
"""
from __future__ import annotations

import numpy as np

_KEY_LIMIT = 2**62


def as_rows(coords) -> np.ndarray:
    arr = np.asarray(coords, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return np.ascontiguousarray(arr)


def void_view(rows: np.ndarray) -> np.ndarray:
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    return rows.view(np.dtype((np.void, 8 * rows.shape[1]))).ravel()


def radix_for(lo: np.ndarray, hi: np.ndarray) -> np.ndarray | None:
    """Radices for mixed-radix keys over the box [lo, hi], or None on overflow."""
    span = (np.asarray(hi, dtype=object) - np.asarray(lo, dtype=object)) + 1
    total = 1
    for s in span:
        total *= int(s)
    if total >= _KEY_LIMIT:
        return None
    return np.array([int(s) for s in span], dtype=np.int64)


def encode(rows: np.ndarray, lo: np.ndarray, radix: np.ndarray) -> np.ndarray:
    key = np.zeros(rows.shape[0], dtype=np.int64)
    for d in range(rows.shape[1]):
        key *= radix[d]
        key += rows[:, d] - lo[d]
    return key


def decode(keys: np.ndarray, lo: np.ndarray, radix: np.ndarray) -> np.ndarray:
    keys = keys.copy()
    out = np.empty((keys.shape[0], radix.shape[0]), dtype=np.int64)
    for d in range(radix.shape[0] - 1, -1, -1):
        out[:, d] = keys % radix[d] + lo[d]
        keys //= radix[d]
    return out


def canonical_order(rows: np.ndarray) -> np.ndarray:
    """Permutation sorting rows lexicographically (first column most significant)."""
    if rows.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.lexsort(rows.T[::-1])


def aggregate(rows: np.ndarray, weights: np.ndarray):
    """Sum weights of identical rows; output sorted lexicographically."""
    rows = as_rows(rows)
    if rows.shape[0] == 0:
        return rows.reshape(0, rows.shape[1]), np.zeros(0)
    lo, hi = rows.min(axis=0), rows.max(axis=0)
    radix = radix_for(lo, hi)
    if radix is not None:
        keys = encode(rows, lo, radix)
        uniq, inv = np.unique(keys, return_inverse=True)
        sums = np.bincount(inv.ravel(), weights=weights, minlength=uniq.size)
        return decode(uniq, lo, radix), sums
    uniq, first, inv = np.unique(void_view(rows), return_index=True, return_inverse=True)
    sums = np.bincount(inv.ravel(), weights=weights, minlength=uniq.size)
    out, sums = rows[first], sums
    order = canonical_order(out)
    return out[order], sums[order]


class RowIndex:
    """Position lookup for a fixed set of distinct rows."""

    def __init__(self, rows):
        rows = as_rows(rows)
        self.rows = rows
        self.k = rows.shape[1]
        if rows.shape[0] == 0:
            self._mode = "empty"
            return
        self.lo = rows.min(axis=0)
        self.hi = rows.max(axis=0)
        self.radix = radix_for(self.lo, self.hi)
        if self.radix is not None:
            self._mode = "radix"
            keys = encode(rows, self.lo, self.radix)
        else:
            self._mode = "void"
            keys = void_view(rows)
        self._order = np.argsort(keys, kind="stable")
        self._sorted = keys[self._order]
        if np.any(self._sorted[1:] == self._sorted[:-1]):
            raise ValueError("RowIndex requires distinct rows")

    def __len__(self) -> int:
        return self.rows.shape[0]

    def find(self, queries) -> np.ndarray:
        """Positions of query rows, -1 where absent."""
        q = as_rows(queries)
        out = np.full(q.shape[0], -1, dtype=np.int64)
        if self._mode == "empty" or q.shape[0] == 0:
            return out
        if q.shape[1] != self.k:
            raise ValueError("row width mismatch")
        if self._mode == "radix":
            inside = np.all((q >= self.lo) & (q <= self.hi), axis=1)
            if not inside.any():
                return out
            keys = encode(q[inside], self.lo, self.radix)
            pos = np.searchsorted(self._sorted, keys)
            pos = np.minimum(pos, self._sorted.size - 1)
            hit = self._sorted[pos] == keys
            idx = np.flatnonzero(inside)
            out[idx[hit]] = self._order[pos[hit]]
            return out
        keys = void_view(q)
        pos = np.minimum(np.searchsorted(self._sorted, keys), self._sorted.size - 1)
        hit = self._sorted[pos] == keys
        out[hit] = self._order[pos[hit]]
        return out

    def contains(self, queries) -> np.ndarray:
        return self.find(queries) >= 0
