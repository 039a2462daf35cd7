"""Finitely supported measures on groups and the stable-like families."""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .errors import DomainError, UsageError
from .groups import Group, GroupElement
from .metric import WordMetric
from .polycyclic import MalcevBasis, pi_S_rows
from .rows import RowIndex, aggregate, as_rows, canonical_order

MASS_TOL = 1e-12


def _check_alpha(alpha: float):
    if not (0 < float(alpha) < 2):
        raise UsageError(f"alpha={alpha} outside the open interval (0,2)")


@dataclass
class SparseMeasure:
    """Finitely supported sub-probability measure plus tail bookkeeping.

    ``dropped_mass`` is the mass of the true measure that is not represented
    (truncation tails and pruning).  ``deficit_l2`` bounds the l2 norm of the
    non-negative difference between the true measure and the represented one;
    it feeds the certified intervals of the convolution engine.
    """

    group: Group
    rows: np.ndarray
    masses: np.ndarray
    truncation_radius: int | None = None
    dropped_mass: float = 0.0
    symmetric: bool = False
    deficit_l2: float = 0.0
    label: str = ""
    _index: RowIndex | None = field(default=None, repr=False, compare=False)

    # -- construction ------------------------------------------------------
    @classmethod
    def from_rows(cls, group: Group, rows, masses, *, symmetric=False, **kw) -> "SparseMeasure":
        rows = as_rows(rows)
        masses = np.asarray(masses, dtype=float)
        if rows.shape[0] and rows.shape[1] != group.dim:
            raise UsageError("row width does not match the group")
        rows, masses = aggregate(rows.reshape(-1, group.dim), masses)
        keep = masses > 0
        rows, masses = rows[keep], masses[keep]
        if symmetric:
            masses = _exact_symmetric(group, rows, masses)
        return cls(group, rows, masses, symmetric=symmetric, **kw)

    @classmethod
    def from_dict(cls, group: Group, table: dict, **kw) -> "SparseMeasure":
        rows = np.array([g.coords if isinstance(g, GroupElement) else g for g in table],
                        dtype=np.int64).reshape(-1, group.dim)
        return cls.from_rows(group, rows, list(table.values()), **kw)

    @classmethod
    def delta(cls, group: Group) -> "SparseMeasure":
        return cls.from_rows(group, group.identity_rows(1), [1.0], symmetric=True,
                             truncation_radius=0, label="delta_e")

    @classmethod
    def uniform(cls, group: Group, elements, label="uniform") -> "SparseMeasure":
        rows = np.array([g.coords for g in elements], dtype=np.int64)
        return cls.from_rows(group, rows, np.full(len(rows), 1.0 / len(rows)),
                             symmetric=True, label=label)

    # -- access ------------------------------------------------------------
    def __len__(self):
        return self.rows.shape[0]

    @property
    def index(self) -> RowIndex:
        if self._index is None:
            self._index = RowIndex(self.rows)
        return self._index

    @property
    def support(self) -> dict[GroupElement, float]:
        return dict(zip(self.group.elements(self.rows), self.masses.tolist()))

    def masses_at(self, rows) -> np.ndarray:
        pos = self.index.find(rows)
        out = np.zeros(len(pos))
        out[pos >= 0] = self.masses[pos[pos >= 0]]
        return out

    def mass(self, g: GroupElement) -> float:
        self.group._check(g)
        return float(self.masses_at(g.row[None])[0])

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def l2(self) -> float:
        return float(np.sqrt(np.dot(self.masses, self.masses)))

    def reflect(self) -> "SparseMeasure":
        """The reflected measure x -> mu(x^-1)."""
        rows = self.group.inv(self.rows)
        order = canonical_order(rows)
        return replace(self, rows=rows[order], masses=self.masses[order], _index=None,
                       label=f"reflect({self.label})")

    def check_invariants(self, tol: float = MASS_TOL) -> None:
        if np.any(self.masses <= 0):
            raise DomainError("masses must be positive")
        if abs(self.total + self.dropped_mass - 1.0) > tol:
            raise DomainError(f"mass {self.total} + dropped {self.dropped_mass} != 1")
        if self.symmetric:
            if not np.array_equal(self.masses_at(self.group.inv(self.rows)), self.masses):
                raise DomainError("symmetric flag set but mass(g) != mass(g^-1)")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"c{i}" for i in range(self.group.dim)] + ["mass"])
            for row, m in zip(self.rows.tolist(), self.masses.tolist()):
                w.writerow(row + [repr(m)])


def _exact_symmetric(group: Group, rows: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Make mass(g) and mass(g^-1) bit-identical by averaging each pair."""
    if len(rows) == 0:
        return masses
    idx = RowIndex(rows)
    partner = idx.find(group.inv(rows))
    if np.any(partner < 0):
        raise DomainError("support is not closed under inversion")
    lo = np.minimum(np.arange(len(rows)), partner)
    hi = np.maximum(np.arange(len(rows)), partner)
    pair = 0.5 * (masses[lo] + masses[hi])
    return np.where(lo == hi, masses, pair)


# -- psi and the coordinate-wise measures ----------------------------------

@dataclass
class LatticePsi:
    """psi(a) = c (1 + |a|)^(-alpha-k) on the box [-R, R]^k."""

    k: int
    alpha: float
    box_radius: int
    normalization: float
    points: np.ndarray
    masses: np.ndarray
    tail_mass: float
    tail_l2: float

    def __call__(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float).reshape(-1, self.k)
        return self.normalization * (1.0 + np.linalg.norm(a, axis=1)) ** (-self.alpha - self.k)


def _sphere_area(k: int) -> float:
    return 2 * math.pi ** (k / 2) / math.gamma(k / 2)


def _outside_box_sum(k: int, R: int, power: float, budget: int = 4 * 10**6) -> float:
    """Estimate of sum over Z^k minus [-R,R]^k of (1+|a|)^(-power).

    An annulus out to a larger box is summed exactly; the remainder uses the
    radial integral bound sum_{|a| >= rho} <= area * rho^(k-power) / (power-k).
    For k = 1 the sum is a Hurwitz zeta value.
    """
    if k == 1:
        return float(2 * special.zeta(power, R + 2))
    outer = max(R, 1)
    while (2 * (2 * outer + 1)) ** k <= budget and outer < 8 * max(R, 1):
        outer *= 2
    total = 0.0
    if outer > R:
        axis = np.arange(-outer, outer + 1, dtype=float)
        # sum the annulus slab by slab to bound memory
        for first in axis:
            rest = np.stack(np.meshgrid(*([axis] * (k - 1)), indexing="ij"), -1).reshape(-1, k - 1)
            pts_inf = np.maximum(abs(first), np.abs(rest).max(axis=1))
            sel = pts_inf > R
            if not sel.any():
                continue
            r = np.sqrt(first**2 + (rest[sel] ** 2).sum(axis=1))
            total += float(((1.0 + r) ** (-power)).sum())
    rho = outer + 0.5
    total += _sphere_area(k) * rho ** (k - power) / (power - k)
    return total


def build_psi(k: int, alpha: float, R: int) -> LatticePsi:
    """Normalized psi on the box with the mass outside the box as tail_mass."""
    _check_alpha(alpha)
    if k < 1 or R < 0:
        raise UsageError("build_psi needs k >= 1 and R >= 0")
    axis = np.arange(-R, R + 1, dtype=np.int64)
    pts = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), -1).reshape(-1, k)
    raw = (1.0 + np.linalg.norm(pts.astype(float), axis=1)) ** (-alpha - k)
    tail_raw = _outside_box_sum(k, R, alpha + k)
    tail_sq = _outside_box_sum(k, R, 2 * (alpha + k))
    c = 1.0 / (raw.sum() + tail_raw)
    masses = c * raw
    return LatticePsi(k, float(alpha), R, c, pts, masses, tail_mass=1.0 - float(masses.sum()),
                      tail_l2=c * math.sqrt(tail_sq))


def _tuple_rows(group: Group, S) -> np.ndarray:
    S = [s if isinstance(s, GroupElement) else group.named(s) for s in S]
    return np.array([s.coords for s in S], dtype=np.int64).reshape(-1, group.dim)


def _pi_injective(group: Group, S_rows: np.ndarray, images: np.ndarray, points: np.ndarray) -> bool:
    """True when S is a Mal'cev tuple whose coordinates recover the exponents."""
    if len(S_rows) != group.dim or not group.nilpotent:
        return False
    try:
        basis = MalcevBasis(group, group.elements(S_rows))
        return bool(np.array_equal(basis.coordinates_rows(images), points))
    except (DomainError, UsageError):
        return False


def build_coordinatewise(psi: LatticePsi, S, group: Group | None = None, *,
                         tail: str = "dropped") -> SparseMeasure:
    """nu(h) = 1/2 sum of psi(a) over a with pi_S(a) in {h, h^-1}.

    ``tail="dropped"`` keeps psi's tail as dropped mass.  With
    ``tail="renormalized"`` the box measure is rescaled to total mass one,
    i.e. the tail draws of the sampler are discarded.
    """
    if group is None:
        first = S[0]
        if not isinstance(first, GroupElement):
            raise UsageError("pass the group when S is given by names")
        group = first.group
    S_rows = _tuple_rows(group, S)
    if len(S_rows) != psi.k:
        raise UsageError("|S| must equal the dimension of psi")
    images = pi_S_rows(psi.points, S_rows, group)
    rows = np.concatenate([images, group.inv(images)])
    masses = np.concatenate([psi.masses, psi.masses]) / 2
    if tail == "renormalized":
        masses = masses / masses.sum()
        dropped, q = 0.0, 0.0
    elif tail == "dropped":
        dropped = psi.tail_mass
        # pushforward under an injective map keeps the l2 norm; else l2 <= l1
        q = psi.tail_l2 if _pi_injective(group, S_rows, images, psi.points) else psi.tail_mass
    else:
        raise UsageError("tail must be 'dropped' or 'renormalized'")
    nu = SparseMeasure.from_rows(group, rows, masses, symmetric=True,
                                 truncation_radius=psi.box_radius, dropped_mass=dropped,
                                 deficit_l2=q, label=f"nu_psi(alpha={psi.alpha},R={psi.box_radius})")
    if tail == "dropped":
        nu.dropped_mass = 1.0 - nu.total
    return nu


def build_mu_alpha(metric: WordMetric, alpha: float, R: int) -> SparseMeasure:
    """mu(g) proportional to (1+|g|)^(-d-alpha) on B(R), renormalized."""
    _check_alpha(alpha)
    d = metric.group.known_growth_degree
    if d is None:
        raise UsageError(f"{metric.group.key} has no known growth degree")
    if R > metric.radius_cap:
        raise UsageError(f"R={R} exceeds the metric radius cap {metric.radius_cap}")
    rows = metric.ball_rows(R)
    L = metric.lengths(rows)
    w = (1.0 + L) ** (-(d + alpha))
    # same formula for g and g^-1 keeps masses bit-identical
    order = canonical_order(rows)
    return SparseMeasure(metric.group, rows[order], (w / w.sum())[order], truncation_radius=R,
                         dropped_mass=0.0, symmetric=True, label=f"mu_alpha(alpha={alpha},R={R})")


def build_axis_measure(S, alpha: float, R: int, group: Group | None = None) -> SparseMeasure:
    """Mass of s_i^a proportional to (1+|a|)^(-1-alpha), |a| <= R, summed over i."""
    _check_alpha(alpha)
    group = group or S[0].group
    S_rows = _tuple_rows(group, S)
    a = np.arange(-R, R + 1, dtype=np.int64)
    w = (1.0 + np.abs(a)) ** (-1.0 - alpha)
    rows, masses = [], []
    for s in S_rows:
        rows.append(group.power_rows(np.tile(s, (len(a), 1)), a))
        masses.append(w)
    masses = np.concatenate(masses)
    return SparseMeasure.from_rows(group, np.concatenate(rows), masses / masses.sum(),
                                   symmetric=True, truncation_radius=R,
                                   label=f"axis(alpha={alpha},R={R})")


def convex_combination(parts) -> SparseMeasure:
    parts = list(parts)
    if not parts:
        raise UsageError("convex_combination needs at least one part")
    weights = np.array([w for w, _ in parts], dtype=float)
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > MASS_TOL:
        raise UsageError(f"weights must be positive and sum to 1, got {weights.sum()}")
    group = parts[0][1].group
    for _, m in parts:
        if m.group.key != group.key:
            raise UsageError("parts live on different groups")
    rows = np.concatenate([m.rows for _, m in parts])
    masses = np.concatenate([w * m.masses for w, m in parts])
    symmetric = all(m.symmetric for _, m in parts)
    out = SparseMeasure.from_rows(
        group, rows, masses, symmetric=symmetric,
        dropped_mass=float(sum(w * m.dropped_mass for w, m in parts)),
        deficit_l2=float(sum(w * m.deficit_l2 for w, m in parts)),
        truncation_radius=max((m.truncation_radius or 0) for _, m in parts),
        label="+".join(f"{w:g}*{m.label}" for w, m in parts))
    return out


def symmetrize_multiplicative(mu: SparseMeasure, plan=None) -> SparseMeasure:
    """The symmetric measure reflect(mu) * mu."""
    from .engine import ConvolutionPlan, convolve
    out = convolve(mu.reflect(), mu, plan or ConvolutionPlan())
    out.masses = _exact_symmetric(out.group, out.rows, out.masses)
    out.symmetric = True
    out.label = f"sym({mu.label})"
    return out


# -- moment and condition checks -------------------------------------------

def _support_lengths(mu: SparseMeasure, metric: WordMetric) -> np.ndarray:
    L = metric.lengths(mu.rows)
    if np.any(L < 0):
        bad = mu.group.element(mu.rows[np.flatnonzero(L < 0)[0]])
        raise UsageError(f"support element {bad!r} lies outside the enumerated metric range")
    return L


def weak_moment_stat(mu: SparseMeasure, metric: WordMetric, alpha: float) -> float:
    """max over t in 1..T of t^alpha * (mu(|g| >= t) + dropped mass)."""
    L = _support_lengths(mu, metric)
    T = mu.truncation_radius if mu.truncation_radius else int(L.max(initial=0))
    T = max(T, 1)
    hist = np.bincount(L, weights=mu.masses, minlength=T + 2)
    tail = hist[::-1].cumsum()[::-1]  # tail[t] = mu(|g| >= t)
    t = np.arange(1, T + 1)
    return float(np.max(t.astype(float) ** alpha * (tail[1:T + 1] + mu.dropped_mass)))


@dataclass
class ConditionReport:
    passed: bool
    rows: list[dict]
    warnings: list[str]


def _lower_bound_check(mu, group, members: np.ndarray, bound: float) -> tuple[float, bool]:
    both = np.concatenate([members, group.inv(members)])
    low = float(mu.masses_at(both).min()) if len(both) else float("inf")
    return low, low >= bound


def check_BL(mu: SparseMeasure, metric: WordMetric, A: float, eps: float, balls, *,
             alpha: float, radius_const: float = 2.0) -> ConditionReport:
    """Ball version of the lower-bound condition, one row per scale k = 1, 2, ...

    ``balls`` lists (center g_k, radius r_k).  The comparability r_k ~ A^k is
    checked as A^k / radius_const <= r_k <= radius_const * A^k.
    """
    d = metric.group.known_growth_degree
    rows, warn = [], []
    if not balls:
        warn.append("no scales given: condition holds vacuously")
    for k, (center, r) in enumerate(balls, start=1):
        ball = metric.ball_rows(int(r))
        members = metric.group.mul(np.tile(center.row, (len(ball), 1)), ball)
        bound = eps * A ** (-k * (alpha + d))
        low, ok_mass = _lower_bound_check(mu, metric.group, members, bound)
        ok_center = metric.word_length(center) <= A**k
        ok_radius = A**k / radius_const <= r <= radius_const * A**k
        rows.append(dict(k=k, min_mass=low, bound=bound, mass_ok=ok_mass,
                         center_ok=ok_center, radius_ok=ok_radius))
    if warn:
        warnings.warn(warn[0])
    return ConditionReport(all(r["mass_ok"] and r["center_ok"] and r["radius_ok"] for r in rows),
                           rows, warn)


def check_L(mu: SparseMeasure, metric: WordMetric, A: float, eps: float, sets, *,
            alpha: float, card_const: float = 1.0, length_const: float = 2.0) -> ConditionReport:
    """Set version: card(M_k) >= card_const*A^(kd), |g| ~ A^k on M_k, mass lower bound."""
    d = metric.group.known_growth_degree
    rows, warn = [], []
    if not sets:
        warn.append("no scales given: condition holds vacuously")
    for k, M in enumerate(sets, start=1):
        members = as_rows([g.coords if isinstance(g, GroupElement) else g for g in M]) \
            if len(M) else np.zeros((0, metric.group.dim), dtype=np.int64)
        bound = eps * A ** (-k * (alpha + d))
        low, ok_mass = _lower_bound_check(mu, metric.group, members, bound)
        ok_card = len(members) >= card_const * A ** (k * d)
        L = metric.lengths(members)
        ok_len = bool(len(L)) and bool(np.all(L >= 0)) and bool(
            np.all((L >= A**k / length_const) & (L <= length_const * A**k)))
        rows.append(dict(k=k, card=len(members), min_mass=low, bound=bound,
                         mass_ok=ok_mass, card_ok=ok_card, length_ok=ok_len))
    if warn:
        warnings.warn(warn[0])
    return ConditionReport(all(r["mass_ok"] and r["card_ok"] and r["length_ok"] for r in rows),
                           rows, warn)


def check_U(nu: SparseMeasure, sub_metric: WordMetric, alpha: float) -> ConditionReport:
    """Tail and truncated second moment of nu measured in the metric of <Sigma>."""
    L = sub_metric.lengths(nu.rows)
    if np.any(L < 0):
        bad = nu.group.element(nu.rows[np.flatnonzero(L < 0)[0]])
        return ConditionReport(False, [dict(witness=bad)],
                               [f"support element {bad!r} not reached in <Sigma>"])
    T = max(int(L.max(initial=0)), 1)
    hist = np.bincount(L, weights=nu.masses, minlength=T + 2)
    t = np.arange(1, T + 1, dtype=float)
    tail = hist[::-1].cumsum()[::-1][1:T + 1] + nu.dropped_mass
    second = np.cumsum(hist * np.arange(len(hist)) ** 2)[1:T + 1]
    tail_stat = float(np.max(t**alpha * tail))
    second_stat = float(np.max(t ** (alpha - 2) * second))
    ok = math.isfinite(tail_stat) and math.isfinite(second_stat)
    return ConditionReport(ok, [dict(tail_stat=tail_stat, second_moment_stat=second_stat)], [])


# -- GJP diagnostics on Z ------------------------------------------------------

@dataclass
class GJPProfile:
    m: np.ndarray
    K: np.ndarray
    G: np.ndarray

    @property
    def Q(self) -> np.ndarray:
        return self.K + self.G

    def a(self, n) -> np.ndarray:
        """a_n = least m with Q(m) <= 1/n."""
        n = np.atleast_1d(np.asarray(n, dtype=float))
        running = np.minimum.accumulate(self.Q)
        pos = np.searchsorted(-running, -1.0 / n, side="left")
        if np.any(pos >= len(self.m)):
            raise UsageError("m_max too small: Q(m) never drops below 1/n")
        return self.m[pos]


def gjp_profile(nu: SparseMeasure, m_max: int) -> GJPProfile:
    if nu.group.dim != 1:
        raise UsageError("gjp_profile needs a measure on Z")
    z = np.abs(nu.rows[:, 0])
    inside = z <= m_max
    w_sq = np.bincount(z[inside], weights=nu.masses[inside] * z[inside].astype(float) ** 2,
                       minlength=m_max + 1)
    w = np.bincount(z[inside], weights=nu.masses[inside], minlength=m_max + 1)
    m = np.arange(1, m_max + 1)
    K = np.cumsum(w_sq)[1:] / m.astype(float) ** 2
    below = np.concatenate([[0.0], np.cumsum(w)])[1:m_max + 1]  # mass with |z| < m
    G = (nu.total - below) + nu.dropped_mass
    return GJPProfile(m, K, G)


# -- sampling ------------------------------------------------------------------

def alias_table(p: np.ndarray):
    """Vose alias tables (prob, alias) for weights p."""
    from ._kernels import alias_build
    return alias_build(np.ascontiguousarray(p, dtype=float))


class Sampler:
    """Alias-method sampler over a finite set of group elements.

    Draws from the normalized support; when the source carries dropped mass
    the draws follow the conditional law and ``bias_bound`` reports the total
    variation distance to the true law.
    """

    def __init__(self, group: Group, rows, weights, *, bias_bound=0.0, invert_half=False,
                 label=""):
        self.group = group
        self.rows = as_rows(rows)
        self.prob, self.alias = alias_table(weights)
        self.bias_bound = float(bias_bound)
        self.invert_half = invert_half
        self.label = label

    @classmethod
    def from_measure(cls, mu: SparseMeasure) -> "Sampler":
        return cls(mu.group, mu.rows, mu.masses, bias_bound=mu.dropped_mass, label=mu.label)

    @classmethod
    def from_psi(cls, psi: LatticePsi, S, group: Group) -> "Sampler":
        """Draw a from the boxed psi, map through pi_S, invert with probability 1/2."""
        images = pi_S_rows(psi.points, _tuple_rows(group, S), group)
        return cls(group, images, psi.masses, bias_bound=psi.tail_mass, invert_half=True,
                   label="nu_psi sampler")

    def draw_indices(self, size: int, rng: np.random.Generator) -> np.ndarray:
        i = rng.integers(0, len(self.prob), size=size)
        u = rng.random(size)
        return np.where(u < self.prob[i], i, self.alias[i])

    def draw_rows(self, size: int, rng: np.random.Generator) -> np.ndarray:
        out = self.rows[self.draw_indices(size, rng)]
        if self.invert_half:
            flip = rng.random(size) < 0.5
            if flip.any():
                out[flip] = self.group.inv(out[flip])
        return out
