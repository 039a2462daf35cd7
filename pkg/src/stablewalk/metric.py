"""Word metrics: BFS layers of the Cayley graph, balls and growth fits."""
from __future__ import annotations

import numpy as np

from .errors import UnreachedError, UsageError
from .groups import Group, GroupElement
from .rows import RowIndex, aggregate, as_rows

DEFAULT_BALL_BUDGET = 10**7


def _l1_sphere(d: int, r: int) -> np.ndarray:
    """All integer vectors of l1 norm exactly r in dimension d."""
    if d == 1:
        return np.array([[r], [-r]] if r else [[0]], dtype=np.int64)
    parts = []
    for first in range(-r, r + 1):
        rest = _l1_sphere(d - 1, r - abs(first))
        parts.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.concatenate(parts)


class WordMetric:
    """Exact word length over a symmetric generating tuple.

    For free abelian groups with the standard generators the l1 formula is
    used directly; every other case runs a breadth-first search until the
    radius cap or the element budget is reached.
    """

    def __init__(self, group: Group, radius_cap: int | None = None,
                 generators=None, budget: int = DEFAULT_BALL_BUDGET):
        self.group = group
        self.budget = int(budget)
        if generators is None:
            self.generators = group.generators
        else:
            gens = [g if isinstance(g, GroupElement) else group.named(g) for g in generators]
            closed = set(gens)
            if any(g.inverse() not in closed for g in gens):
                raise UsageError("generating tuple must be closed under inverses")
            self.generators = tuple(gens)
        self._gen_rows = np.array([g.coords for g in self.generators], dtype=np.int64)
        standard = generators is None and group.exact_length(group.identity_rows(1)) is not None
        self.closed_form = standard
        if self.closed_form:
            self.radius_cap = radius_cap if radius_cap is not None else self._closed_cap()
            self._layers: list[np.ndarray] | None = None
            self._index = None
        else:
            self._bfs(radius_cap)

    # -- construction ----------------------------------------------------
    def _closed_cap(self) -> int:
        # largest r whose ball fits the budget; counts grow monotonically in r
        lo, hi = 0, 1
        while self._closed_count(hi) <= self.budget and hi < 10**9:
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            lo, hi = (mid, hi) if self._closed_count(mid) <= self.budget else (lo, mid)
        return lo

    def _closed_count(self, r: int) -> int:
        # number of points of Z^d with l1 norm <= r
        from math import comb
        d = self.group.dim
        return sum(comb(d, k) * comb(r, k) * 2**k for k in range(d + 1))

    def _bfs(self, radius_cap):
        g = self.group
        layers = [g.identity_rows(1)]
        total = 1
        prev = RowIndex(np.zeros((0, g.dim), dtype=np.int64))
        cur_idx = RowIndex(layers[0])
        self.truncated_by_budget = False
        while radius_cap is None or len(layers) <= radius_cap:
            cur = layers[-1]
            cand = g.mul(np.repeat(cur, len(self._gen_rows), axis=0),
                         np.tile(self._gen_rows, (len(cur), 1)))
            cand, _ = aggregate(cand, np.zeros(len(cand)))
            fresh = cand[~(prev.contains(cand) | cur_idx.contains(cand))]
            if len(fresh) == 0:
                break  # finite group exhausted
            if total + len(fresh) > self.budget:
                self.truncated_by_budget = True
                break
            layers.append(fresh)
            total += len(fresh)
            prev, cur_idx = cur_idx, RowIndex(fresh)
        self._layers = layers
        self.radius_cap = len(layers) - 1
        ball = np.concatenate(layers)
        self._ball_index = RowIndex(ball)
        self._ball_len = np.concatenate(
            [np.full(len(L), r, dtype=np.int64) for r, L in enumerate(layers)])

    # -- queries -----------------------------------------------------------
    @property
    def layers(self) -> list[np.ndarray]:
        if self._layers is None:
            self._layers = [_l1_sphere(self.group.dim, r) for r in range(self.radius_cap + 1)]
        return self._layers

    def lengths(self, X) -> np.ndarray:
        """Word lengths of rows; -1 marks elements beyond the radius cap."""
        X = as_rows(X)
        if self.closed_form:
            L = self.group.exact_length(X)
            return np.where(L <= self.radius_cap, L, -1)
        pos = self._ball_index.find(X)
        out = np.full(len(X), -1, dtype=np.int64)
        out[pos >= 0] = self._ball_len[pos[pos >= 0]]
        return out

    def word_length(self, g: GroupElement) -> int:
        self.group._check(g)
        L = int(self.lengths(g.row[None])[0])
        if L < 0:
            raise UnreachedError(f"{g!r} is unreached within radius cap {self.radius_cap}")
        return L

    def ball_rows(self, r: int) -> np.ndarray:
        if r < 0 or r > self.radius_cap:
            raise UsageError(f"radius {r} outside [0, {self.radius_cap}]")
        if self.closed_form and self._layers is None:
            return self._closed_ball(r)
        return np.concatenate(self.layers[: r + 1])

    def _closed_ball(self, r: int) -> np.ndarray:
        d = self.group.dim
        if d == 1:
            return np.arange(-r, r + 1, dtype=np.int64)[:, None]
        axes = [np.arange(-r, r + 1, dtype=np.int64)] * d
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        return grid[np.abs(grid).sum(axis=1) <= r]

    def ball(self, r: int) -> frozenset[GroupElement]:
        return frozenset(self.group.elements(self.ball_rows(r)))

    def ball_count(self, r: int) -> int:
        if r < 0 or r > self.radius_cap:
            raise UsageError(f"radius {r} outside [0, {self.radius_cap}]")
        if self.closed_form:
            return self._closed_count(r)
        return int(sum(len(L) for L in self._layers[: r + 1]))


def word_length(g: GroupElement, metric: WordMetric) -> int:
    return metric.word_length(g)


def ball(r: int, metric: WordMetric) -> frozenset[GroupElement]:
    return metric.ball(r)


def growth_degree_fit(metric: WordMetric, r_min: int, r_max: int) -> float:
    """Least-squares slope of log |B(r)| against log r over [r_min, r_max]."""
    if r_min < 2 or r_max <= r_min:
        raise UsageError("growth_degree_fit needs r_max > r_min >= 2")
    if r_max > metric.radius_cap:
        raise UsageError(f"r_max {r_max} exceeds radius cap {metric.radius_cap}")
    r = np.arange(r_min, r_max + 1)
    counts = np.array([metric.ball_count(int(x)) for x in r], dtype=float)
    slope, _ = np.polyfit(np.log(r), np.log(counts), 1)
    return float(slope)
