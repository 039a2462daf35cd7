"""Weight systems, effective weights on a Mal'cev basis and weighted norms.

Letters come from a base generating set (weight 1/2) and from parts, each
part carrying an exponent alpha in (0, 2) and weight 1/alpha.  Weights
propagate to commutators additively.  For a group that is only virtually
nilpotent, the letters are first moved into the nilpotent subgroup N: the
base set is replaced by the basis of N and each part letter s by the
conjugates of its smallest power lying in N.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import BudgetExceeded, DomainError, UsageError
from .groups import Group, GroupElement
from .rows import aggregate, as_rows
from .polycyclic import MalcevBasis


def as_fraction(alpha) -> Fraction:
    """Exact rational for alpha; floats go through their shortest repr."""
    if isinstance(alpha, Fraction):
        return alpha
    if isinstance(alpha, float):
        return Fraction(repr(alpha))
    return Fraction(alpha)


@dataclass(frozen=True)
class Letter:
    name: str
    element: GroupElement
    weight: Fraction
    source: int  # 0 for the base set, i >= 1 for part i


@dataclass
class WeightSystem:
    group: Group
    letters: tuple[Letter, ...]
    alphas: tuple[Fraction, ...]  # one per part

    @property
    def w_star(self) -> Fraction:
        return max(l.weight for l in self.letters)

    def describe(self) -> list[str]:
        return [f"{l.name}: {l.weight}" for l in self.letters]


def _resolve(group: Group, items) -> list[tuple[str, GroupElement]]:
    out = []
    for it in items:
        if isinstance(it, GroupElement):
            group._check(it)
            out.append((repr(it), it))
        else:
            out.append((str(it), group.named(str(it))))
    return out


def build_weight_system(S0, parts, group: Group | None = None) -> WeightSystem:
    """Formal union of S0 (weight 1/2) and the parts (S_i, alpha_i) (weight 1/alpha_i)."""
    if group is None:
        first = next((x for x in S0 if isinstance(x, GroupElement)), None)
        if first is None:
            first = next(x for S, _ in parts for x in S if isinstance(x, GroupElement))
        group = first.group
    letters, alphas = [], []
    for name, g in _resolve(group, S0):
        letters.append(Letter(name, g, Fraction(1, 2), 0))
    for i, (S, alpha) in enumerate(parts, start=1):
        a = as_fraction(alpha)
        if not 0 < a < 2:
            raise UsageError(f"alpha = {float(a)} must lie in (0, 2)")
        alphas.append(a)
        for name, g in _resolve(group, S):
            letters.append(Letter(name, g, 1 / a, i))
    if not letters:
        raise UsageError("weight system has no letters")
    return WeightSystem(group, tuple(letters), tuple(alphas))


# -- letters inside the nilpotent subgroup ----------------------------------

def _nilpotent_letters(ws: WeightSystem, basis: MalcevBasis) -> list[Letter]:
    group = ws.group
    if group.nilpotent:
        return list(ws.letters)
    n_basis, reps = group.nilpotent_subgroup()
    out = [Letter(f"N:{repr(b)}", b, Fraction(1, 2), 0) for b in n_basis]
    for l in ws.letters:
        if l.source == 0:
            continue
        g, m = l.element, 1
        while not group.in_nilpotent_subgroup(g.row[None])[0]:
            g, m = g * l.element, m + 1
            if m > len(reps):
                raise DomainError(f"no power of {l.name} lies in the nilpotent subgroup")
        if g == group.identity:
            continue  # <s> meets N trivially
        for x in reps:
            out.append(Letter(f"{l.name}^{m} conj", x * g * x.inverse(), l.weight, l.source))
    return out


# -- propagation ---------------------------------------------------------------

@dataclass
class EffectiveWeights:
    basis: MalcevBasis
    weights: tuple[Fraction, ...]
    provenance: tuple[str, ...]
    alphas: tuple[Fraction, ...] = ()

    def ladder(self) -> list[tuple[Fraction, int]]:
        levels = sorted(set(self.weights))
        return [(w, sum(1 for x in self.weights if x == w)) for w in levels]


def _pivot(coords) -> int:
    nz = np.flatnonzero(coords)
    return int(nz[0]) if nz.size else -1


def propagate_weights(ws: WeightSystem, basis: MalcevBasis) -> EffectiveWeights:
    """Per-slot weights: the largest weight of a letter or commutator reaching the slot.

    An element of weight w whose first nonzero coordinate sits in slot p
    lies in the subgroup generated by weight >= w, which for an adapted
    basis is a suffix u_q, ..., u_n with q <= p; every slot from p on thus
    gets weight >= w.  Adaptedness is checked: at each weight level the
    pivots of the elements reaching it must cover a full suffix.
    """
    group = basis.group
    letters = _nilpotent_letters(ws, basis)
    n = len(basis)
    pool: dict[tuple, tuple[Fraction, str]] = {}

    def add(g: GroupElement, w: Fraction, why: str) -> bool:
        if g == group.identity:
            return False
        key = g.coords
        if key in pool and pool[key][0] >= w:
            return False
        pool[key] = (w, why)
        return True

    for l in letters:
        try:
            basis.coordinates(l.element)
        except DomainError:
            raise DomainError(f"letter {l.name} has no coordinates in the basis") from None
        add(l.element, l.weight, f"letter {l.name}")
    frontier = list(pool)
    for _ in range(n):  # nilpotency class is at most the basis length
        new = []
        snapshot = list(pool.items())
        for k1 in frontier:
            w1, why1 = pool[k1]
            g1 = group.element(k1)
            for k2, (w2, why2) in snapshot:
                g = group.commutator(g1, group.element(k2))
                if add(g, w1 + w2, f"[{why1}, {why2}]"):
                    new.append(g.coords)
        if not new:
            break
        frontier = new

    items = []
    for key, (w, why) in pool.items():
        items.append((_pivot(basis.coordinates(group.element(key))), w, why))
    weights, prov = [], []
    best = None
    for i in range(n):
        own = [(w, why) for p, w, why in items if p == i]
        own_best = max(own, key=lambda t: t[0]) if own else None
        if own_best is not None and (best is None or own_best[0] >= best):
            best = own_best[0]
            prov.append(own_best[1])
        elif best is not None:
            prov.append(f"inherited from slot {basis.names[i - 1]}")
        else:
            raise DomainError(f"slot {basis.names[i]} is reached by no letter or commutator")
        weights.append(best)
    for t in sorted({w for _, w, _ in items}):
        piv = sorted({p for p, w, _ in items if w >= t})
        if piv != list(range(piv[0], n)):
            missing = sorted(set(range(piv[0], n)) - set(piv))
            raise DomainError(
                f"basis not adapted: elements of weight >= {t} start at slot "
                f"{basis.names[piv[0]]} but never reach slots {[basis.names[m] for m in missing]}")
    return EffectiveWeights(basis, tuple(weights), tuple(prov), ws.alphas)


# -- gamma --------------------------------------------------------------------

@dataclass
class GammaReport:
    ladder: list[tuple[Fraction, int]]
    gamma: Fraction
    slot_weights: tuple[Fraction, ...]
    slot_names: tuple[str, ...] = ()

    def to_json(self) -> str:
        def frac(x):
            return {"numerator": x.numerator, "denominator": x.denominator}
        return json.dumps({
            "gamma": frac(self.gamma),
            "gamma_float": float(self.gamma),
            "ladder": [{"weight": frac(w), "rank": r} for w, r in self.ladder],
            "slots": [{"name": n, "weight": frac(w)}
                      for n, w in zip(self.slot_names, self.slot_weights)],
        }, indent=2)


def gamma(eff: EffectiveWeights) -> GammaReport:
    ladder = eff.ladder()
    g = sum((w * r for w, r in ladder), Fraction(0))
    return GammaReport(ladder, g, eff.weights, eff.basis.names)


# -- weighted norms ------------------------------------------------------------

class WeightedNorm:
    """Upper bound on the weighted quasi-norm from explicit words.

    An element is written as (coset word) after u_1^{x_1} ... u_n^{x_n}, each
    power realized by the best available recipe: a letter equal to u_i, a
    short word over the base letters, or a commutator [h_j^p, h_k^q] with
    p q close to |x|, which costs about sqrt|x| letters per side.  The bound
    is max over letters of deg^(1 / weight) for the resulting word, so it is
    always a genuine upper bound.
    """

    def __init__(self, ws: WeightSystem, basis: MalcevBasis, eff: EffectiveWeights | None = None):
        self.ws, self.basis, self.group = ws, basis, basis.group
        self.eff = eff or propagate_weights(ws, basis)
        self.letters = list(ws.letters)
        self.nL = len(self.letters)
        self.wts = np.array([float(l.weight) for l in self.letters])
        self._base = [i for i, l in enumerate(self.letters) if l.source == 0]
        self._words = self._short_words()
        if self.group.nilpotent:
            self.reps = [(self.group.identity, np.zeros(self.nL, dtype=np.int64))]
        else:
            self.reps = [(x, self._word_for(x)) for x in self.group.nilpotent_subgroup()[1]]
        self.recipes = [self._recipes_for(i) for i in range(len(basis))]

    # short words over all letters, for the coset representatives and the
    # base-word recipes
    def _short_words(self, max_len: int = 4) -> dict[tuple, np.ndarray]:
        g = self.group
        best = {g.identity.coords: np.zeros(self.nL, dtype=np.int64)}
        layer = dict(best)
        for _ in range(max_len):
            nxt = {}
            for key, deg in layer.items():
                x = g.element(key)
                for i, l in enumerate(self.letters):
                    for s in (l.element, l.element.inverse()):
                        y = (x * s).coords
                        if y not in best and y not in nxt:
                            d = deg.copy()
                            d[i] += 1
                            nxt[y] = d
            best.update(nxt)
            layer = nxt
        return best

    def _word_for(self, x: GroupElement) -> np.ndarray:
        if x.coords not in self._words:
            raise DomainError(f"no short word for {x}")
        return self._words[x.coords]

    def _recipes_for(self, i):
        """Candidate recipes for slot i as (weight, kind, data)."""
        u = self.basis.basis[i]
        out = []
        for j, l in enumerate(self.letters):
            if l.element == u:
                out.append((l.weight, "letter", (j, 1)))
            elif l.element == u.inverse():
                out.append((l.weight, "letter", (j, -1)))
        # shortest word over base letters only
        base_deg = None
        for key, deg in self._words.items():
            if key == u.coords and all(deg[k] == 0 for k in range(self.nL) if k not in self._base):
                base_deg = deg
        if base_deg is not None:
            out.append((Fraction(1, 2), "word", base_deg))
        for (j, k), c in self.basis.commutator_table.items():
            if k >= i or c is None:
                continue
            piv = _pivot(c)
            if piv == i and abs(c[i]) == 1:
                out.append((None, "comm", (j, k, c[i])))
        return out

    def _realize(self, i: int, x: int, depth: int = 0):
        """An element with slot-i coordinate exactly x (earlier slots zero) and its letter degrees."""
        g = self.group
        u = self.basis.basis[i]
        best = None
        for w, kind, data in self.recipes[i]:
            if kind == "letter":
                j, s = data
                deg = np.zeros(self.nL, dtype=np.int64)
                deg[j] = abs(x)
                cand = (u ** x, deg)
            elif kind == "word":
                cand = (u ** x, data * abs(x))
            else:
                if depth > 6:
                    continue
                j, k, sign = data
                p = math.isqrt(abs(x))
                q = abs(x) // p
                hj, dj = self._realize(j, p, depth + 1)
                hk, dk = self._realize(k, q, depth + 1)
                c = g.commutator(hj, hk)
                if (sign * np.sign(x)) < 0:
                    c = g.commutator(hk, hj)
                coords = self.basis.coordinates(c)
                if _pivot(coords) != i or abs(coords[i]) != p * q or np.sign(coords[i]) != np.sign(x):
                    continue
                # remainder of the slot coordinate is handled by the caller
                cand = (c, 2 * (dj + dk))
            cost = self._cost(cand[1])
            if best is None or cost < best[0]:
                best = (cost, cand)
        if best is None:
            raise DomainError(f"slot {self.basis.names[i]} has no realization")
        return best[1]

    def _cost(self, deg) -> float:
        with np.errstate(divide="ignore"):
            return float(np.max(np.where(deg > 0, deg.astype(float) ** (1.0 / self.wts), 0.0)))

    def word_degrees(self, g: GroupElement) -> np.ndarray:
        self.group._check(g)
        for x, xdeg in self.reps:
            h = g * x.inverse()
            try:
                coords = self.basis.coordinates(h)
                break
            except DomainError:
                continue
        else:
            raise DomainError(f"{g} is not covered by the coset representatives")
        deg = xdeg.copy()
        residual = h
        for i in range(len(self.basis)):
            for _ in range(64):
                xi = self.basis.coordinates(residual)[i]
                if xi == 0:
                    break
                elt, d = self._realize(i, int(xi))
                deg += d
                residual = elt.inverse() * residual
            else:
                raise DomainError("decomposition did not terminate")
        return deg

    def __call__(self, g: GroupElement) -> float:
        return self._cost(self.word_degrees(g))

    def values(self, rows) -> np.ndarray:
        return np.array([self(self.group.element(r)) for r in as_rows(rows)])

    # adapted-box model of the weighted ball
    def box_radii(self, R: float) -> list[int]:
        if R < 1:
            return [0] * len(self.basis)
        return [int(math.floor(R ** float(w) + 1e-9)) for w in self.eff.weights]

    def box_rows(self, R: float, budget: int = 10**7) -> np.ndarray:
        radii = self.box_radii(R)
        size = math.prod(2 * r + 1 for r in radii) * len(self.reps)
        if size > budget:
            raise BudgetExceeded(f"box of {size} elements exceeds budget {budget}",
                                 partial=dict(radii=radii, size=size))
        axes = [np.arange(-r, r + 1, dtype=np.int64) for r in radii]
        C = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(radii))
        N = self.basis.compose_rows(C)
        parts = [self.group.mul(N, np.tile(x.row, (len(N), 1))) for x, _ in self.reps]
        return np.concatenate(parts)


def weighted_norm_upper(g: GroupElement, ws: WeightSystem, basis: MalcevBasis,
                        eff: EffectiveWeights | None = None) -> float:
    return WeightedNorm(ws, basis, eff)(g)


def weighted_ball_count(R: float, ws: WeightSystem, basis: MalcevBasis,
                        eff: EffectiveWeights | None = None, *, budget: int = 10**7,
                        enumerate_rows: bool = False) -> int:
    """Distinct elements (coset rep) * prod u_i^{x_i} with |x_i| <= R^{w_i}.

    Mal'cev normal forms are unique and distinct cosets are disjoint, so the
    count is a product; ``enumerate_rows`` builds the elements and dedupes
    them instead.
    """
    eff = eff or propagate_weights(ws, basis)
    n_reps = 1 if basis.group.nilpotent else len(basis.group.nilpotent_subgroup()[1])
    if R < 1:
        return 1
    radii = [int(math.floor(R ** float(w) + 1e-9)) for w in eff.weights]
    if not enumerate_rows:
        return math.prod(2 * r + 1 for r in radii) * n_reps
    rows = WeightedNorm(ws, basis, eff).box_rows(R, budget)
    return len(aggregate(rows, np.ones(len(rows)))[0])


def volume_exponent_fit(R_list, ws: WeightSystem, basis: MalcevBasis,
                        eff: EffectiveWeights | None = None) -> float:
    R = np.asarray(sorted(R_list), dtype=float)
    if len(R) < 4:
        raise UsageError("volume_exponent_fit needs at least 4 radii")
    eff = eff or propagate_weights(ws, basis)
    counts = np.array([weighted_ball_count(r, ws, basis, eff) for r in R], dtype=float)
    return float(np.polyfit(np.log(R), np.log(counts), 1)[0])


# -- tiny exhaustive oracle ------------------------------------------------------

def exact_norm_small(ws: WeightSystem, max_deg: int = 3) -> tuple[dict, float]:
    """Exact norms for elements whose optimum uses each letter at most max_deg times.

    Returns (table, threshold): every element reachable with per-letter degree
    <= max_deg and cost below ``threshold`` has its exact norm in ``table``,
    since any word exceeding the degree budget costs at least the threshold.
    """
    g = ws.group
    L = ws.letters
    wts = [float(l.weight) for l in L]
    threshold = min((max_deg + 1) ** (1.0 / w) for w in wts)
    gens = [(i, s.row) for i, l in enumerate(L) for s in {l.element, l.element.inverse()}]
    # reach[d] = set of elements written with exactly degree vector d
    from itertools import product
    reach = {tuple([0] * len(L)): {g.identity.coords}}
    for total in range(1, max_deg * len(L) + 1):
        for d in product(range(max_deg + 1), repeat=len(L)):
            if sum(d) != total:
                continue
            acc = set()
            for i, row in gens:
                if d[i] == 0:
                    continue
                prev = list(d)
                prev[i] -= 1
                src = reach.get(tuple(prev))
                if not src:
                    continue
                X = np.array(list(src), dtype=np.int64)
                Y = g.mul(X, np.tile(row, (len(X), 1)))
                acc.update(map(tuple, Y.tolist()))
            reach[d] = acc
    table: dict = {}
    for d, elts in reach.items():
        cost = max((di ** (1.0 / w) for di, w in zip(d, wts) if di), default=0.0)
        if cost >= threshold:
            continue
        for e in elts:
            if e not in table or cost < table[e]:
                table[e] = cost
    return table, threshold
