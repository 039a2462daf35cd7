"""Sparse convolution powers with certified error bounds.

Error bookkeeping
-----------------
Each measure carries two numbers describing the non-negative deficit
p = (true measure) - (represented measure):

* ``dropped_mass`` = ||p||_1 (exact, since p >= 0),
* ``deficit_l2`` >= ||p||_2.

For a product (c_A + p_A) * (c_B + p_B) whose pruned part is r, Young's
inequality ||f*g||_2 <= min(||f||_1 ||g||_2, ||f||_2 ||g||_1) (valid on every
discrete group) bounds the new l2 deficit by

    ||r||_2 + min(d_A |c_B|_2, q_A |c_B|_1) + min(|c_A|_2 d_B, |c_A|_1 q_B)
            + min(d_A q_B, q_A d_B).

Return probabilities are inner products <c_a + p_a, c_b + p_b>, so the true
value lies in [<c_a, c_b>, <c_a, c_b> + |c_a|_2 q_b + q_a |c_b|_2 + q_a q_b],
and never above <c_a, c_b> + (total deficit mass of the product).
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from .errors import BudgetExceeded, CertificationError, UsageError
from .groups import FreeAbelian
from .measures import SparseMeasure, _exact_symmetric
from .metric import WordMetric
from .rows import RowIndex, aggregate, canonical_order, decode, radix_for

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ConvolutionPlan:
    prune_threshold: float = 1e-14
    max_support_size: int = 5_000_000
    strategy: str = "repeated-squaring"  # or "direct"
    backend: str = "auto"  # auto | sparse | lattice | numpy
    dense_cells: int = 2**26  # largest dense accumulator (float64 cells)

    def __post_init__(self):
        if self.prune_threshold < 0:
            raise UsageError("prune_threshold must be >= 0")
        if self.strategy not in ("direct", "repeated-squaring"):
            raise UsageError("strategy must be 'direct' or 'repeated-squaring'")
        if self.backend not in ("auto", "sparse", "lattice", "numpy"):
            raise UsageError("backend must be auto, sparse, lattice or numpy")


# -- raw products --------------------------------------------------------------

def _bounds(mu: SparseMeasure, nu: SparseMeasure):
    g = mu.group
    return g.product_bounds(mu.rows.min(0), mu.rows.max(0), nu.rows.min(0), nu.rows.max(0))


def _raw_numpy(mu, nu, chunk=1 << 21):
    g = mu.group
    q = len(nu)
    step = max(1, chunk // q)
    parts_r, parts_w = [], []
    for i in range(0, len(mu), step):
        A = mu.rows[i:i + step]
        X = g.mul(np.repeat(A, q, axis=0), np.tile(nu.rows, (len(A), 1)))
        w = np.outer(mu.masses[i:i + step], nu.masses).ravel()
        r, w = aggregate(X, w)
        parts_r.append(r)
        parts_w.append(w)
    return aggregate(np.concatenate(parts_r), np.concatenate(parts_w))


def _raw_bilinear(mu, nu, plan):
    from ._kernels import dense_bilinear, hash_bilinear, hash_insert

    g = mu.group
    lo, hi = _bounds(mu, nu)
    radix = radix_for(lo, hi)
    if radix is None:
        return _raw_numpy(mu, nu)
    lo = np.array([int(x) for x in lo], dtype=np.int64)
    ti, tj, tk = g.bilinear
    A, a, B, b = mu.rows, mu.masses, nu.rows, nu.masses
    if len(B) > len(A):  # keep the long factor inside the loop
        pass
    cells = int(np.prod(radix.astype(float)))
    if cells <= plan.dense_cells:
        out = np.zeros(cells)
        dense_bilinear(A, a, B, b, ti, tj, tk, lo, radix, out)
        keys = np.flatnonzero(out)
        return decode(keys, lo, radix), out[keys]
    cap = 1 << max(16, int(math.ceil(math.log2(4 * max(len(A), len(B)) + 1))))
    keys = np.full(cap, -1, dtype=np.int64)
    vals = np.zeros(cap)
    used = 0
    p = 0
    while p < len(A):
        room = cap // 2 - used
        if room < len(B):
            live = keys != -1
            k_old, v_old = keys[live], vals[live]
            cap *= 4
            keys = np.full(cap, -1, dtype=np.int64)
            vals = np.zeros(cap)
            used = hash_insert(keys, vals, k_old, v_old)
            continue
        p1 = min(len(A), p + max(1, room // len(B)))
        used += hash_bilinear(A, a, B, b, p, p1, ti, tj, tk, lo, radix, keys, vals)
        p = p1
    live = keys != -1
    k, v = keys[live], vals[live]
    order = np.argsort(k)
    return decode(k[order], lo, radix), v[order]


def _raw_lattice(mu, nu, plan, symmetric):
    """Dense convolution for Z^d through scipy.signal.convolve.

    Cells are lowered by the transform's error allowance so that every
    retained value stays below the exact one; the allowance also enters the
    l2 deficit.
    """
    d = mu.group.dim
    loA, hiA = mu.rows.min(0), mu.rows.max(0)
    loB, hiB = nu.rows.min(0), nu.rows.max(0)
    FA = np.zeros(tuple(int(x) for x in hiA - loA + 1))
    FA[tuple((mu.rows - loA).T)] = mu.masses
    FB = np.zeros(tuple(int(x) for x in hiB - loB + 1))
    FB[tuple((nu.rows - loB).T)] = nu.masses
    out = signal.convolve(FA, FB, method="auto")
    n_cells = out.size
    noise = 8 * _EPS * math.log2(max(n_cells, 2)) * math.sqrt(n_cells) * mu.l2() * nu.l2()
    if symmetric and np.array_equal(loA + loB, -(hiA + hiB)):
        out = 0.5 * (out + np.flip(out))
    out -= noise
    idx = np.nonzero(out > 0)
    rows = np.stack(idx, axis=1).astype(np.int64) + (loA + loB)
    return rows.reshape(-1, d), out[idx], noise * (1.0 + math.sqrt(n_cells))


def _use_lattice(mu, nu, plan) -> bool:
    if not isinstance(mu.group, FreeAbelian):
        return False
    if plan.backend == "lattice":
        return True
    if plan.backend != "auto":
        return False
    ext = (mu.rows.max(0) - mu.rows.min(0) + 1) + (nu.rows.max(0) - nu.rows.min(0))
    cells = float(np.prod(ext.astype(float)))
    if cells > plan.dense_cells:
        return False
    # dense only pays off when the pair count dwarfs the box
    return float(len(mu)) * float(len(nu)) > 4 * cells


def _symmetric_average(g, rows, vals):
    """Average each entry with its inverse, treating missing partners as 0.

    Products of two separately pruned powers need not have a support closed
    under inversion.  The true power is symmetric, so the average of two
    lower bounds is still a lower bound and the l2 deficit does not grow.
    """
    inv = g.inv(rows)
    miss = RowIndex(rows).find(inv) < 0
    if miss.any():
        rows = np.concatenate([rows, inv[miss]])
        vals = np.concatenate([vals, np.zeros(int(miss.sum()))])
    order = canonical_order(rows)
    rows, vals = rows[order], vals[order]
    return rows, _exact_symmetric(g, rows, vals)


def convolve(mu: SparseMeasure, nu: SparseMeasure, plan: ConvolutionPlan | None = None,
             *, symmetric: bool = False) -> SparseMeasure:
    """mu * nu with pruning of masses below the plan threshold."""
    plan = plan or ConvolutionPlan()
    if mu.group.key != nu.group.key:
        raise UsageError("convolve needs measures on the same group")
    g = mu.group
    noise = 0.0
    if len(mu) == 0 or len(nu) == 0:
        rows, vals = np.zeros((0, g.dim), dtype=np.int64), np.zeros(0)
    elif _use_lattice(mu, nu, plan):
        rows, vals, noise = _raw_lattice(mu, nu, plan, symmetric)
    elif plan.backend != "numpy" and g.bilinear is not None:
        rows, vals = _raw_bilinear(mu, nu, plan)
    else:
        rows, vals = _raw_numpy(mu, nu)
    if symmetric and len(rows):
        rows, vals = _symmetric_average(g, rows, vals)
    keep = vals >= plan.prune_threshold
    pruned = vals[~keep]
    rows, vals = rows[keep], vals[keep]
    if len(rows) > plan.max_support_size:
        raise BudgetExceeded(
            f"support {len(rows)} exceeds max_support_size {plan.max_support_size}",
            partial=dict(support=len(rows), retained_mass=float(vals.sum()),
                         pruned_mass=float(pruned.sum())))
    order = canonical_order(rows)
    rows, vals = rows[order], vals[order]
    dA, dB = mu.dropped_mass, nu.dropped_mass
    qA, qB = mu.deficit_l2, nu.deficit_l2
    l2A, l2B = mu.l2(), nu.l2()
    l1A, l1B = mu.total, nu.total
    q = (math.sqrt(float(np.dot(pruned, pruned))) + noise
         + min(dA * l2B, qA * l1B) + min(l2A * dB, l1A * qB) + min(dA * qB, qA * dB))
    # the deficit is non-negative, so its l1 norm is just the missing mass
    dropped = max(0.0, (l1A + dA) * (l1B + dB) - float(vals.sum()))
    radius = None
    if mu.truncation_radius is not None and nu.truncation_radius is not None:
        radius = mu.truncation_radius + nu.truncation_radius
    return SparseMeasure(g, rows, vals, truncation_radius=radius, dropped_mass=dropped,
                         symmetric=symmetric, deficit_l2=q, label=f"({mu.label})*({nu.label})")


# -- powers and return probabilities -------------------------------------------

def power(mu: SparseMeasure, n: int, plan: ConvolutionPlan | None = None) -> SparseMeasure:
    """mu^(n); symmetric inputs give exactly symmetric outputs."""
    plan = plan or ConvolutionPlan()
    if n < 1:
        raise UsageError("power needs n >= 1")
    return _PowerCache(mu, plan).get(n)


class _PowerCache:
    def __init__(self, mu, plan):
        self.mu, self.plan = mu, plan
        self.sym = mu.symmetric
        self.direct = {1: mu}
        self.squares = {1: mu}

    def _conv(self, x, y):
        return convolve(x, y, self.plan, symmetric=self.sym)

    def get(self, n: int) -> SparseMeasure:
        if self.plan.strategy == "direct":
            last = max(k for k in self.direct if k <= n)
            cur = self.direct[last]
            for k in range(last + 1, n + 1):
                cur = self._conv(cur, self.mu)
                self.direct[k] = cur
            return self.direct[n]
        # repeated squaring: combine cached mu^(2^j) along the binary digits
        j, out = 1, None
        while j <= n:
            if j not in self.squares:
                half = self.squares[j // 2]
                self.squares[j] = self._conv(half, half)
            if n & j:
                out = self.squares[j] if out is None else self._conv(out, self.squares[j])
            j <<= 1
        return out

    def forget_below(self, n: int):
        for cache in (self.direct,):
            for k in [k for k in cache if k < n - 1 and k != 1]:
                del cache[k]


@dataclass
class ReturnSeries:
    n: np.ndarray
    value: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    label: str = ""
    meta: list = field(default_factory=list)

    @property
    def rel_error(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.lo > 0, (self.hi - self.lo) / self.lo, np.inf)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "value", "lo", "hi"])
            for row in zip(self.n.tolist(), self.value.tolist(), self.lo.tolist(), self.hi.tolist()):
                w.writerow([row[0]] + [repr(x) for x in row[1:]])


def pair_return(ca: SparseMeasure, cb: SparseMeasure) -> tuple[float, float]:
    """Certified interval for sum_x A(x) B(x^-1) given two symmetric powers."""
    if ca is cb:
        lo = float(np.dot(ca.masses, ca.masses))
    else:
        lo = float(np.dot(ca.masses, cb.masses_at(ca.rows)))
    la, lb = ca.l2(), cb.l2()
    qa, qb = ca.deficit_l2, cb.deficit_l2
    l2_bound = la * qb + qa * lb + qa * qb
    l1_bound = ca.dropped_mass + cb.dropped_mass - ca.dropped_mass * cb.dropped_mass
    return lo, lo + min(l2_bound, l1_bound)


def return_series(mu: SparseMeasure, n_list, plan: ConvolutionPlan | None = None,
                  progress=None) -> ReturnSeries:
    """mu^(n)(e) for each n in n_list from the half powers mu^(n//2), mu^(n - n//2)."""
    plan = plan or ConvolutionPlan()
    if not mu.symmetric:
        raise UsageError("return_series needs a symmetric measure; "
                         "use symmetrize_multiplicative first")
    n_list = sorted(int(n) for n in n_list)
    if not n_list:
        raise UsageError("n_list is empty")
    if n_list[0] < 1:
        raise UsageError("times must be >= 1")
    cache = _PowerCache(mu, plan)
    vals, los, his, meta = [], [], [], []
    t0 = time.perf_counter()
    for n in n_list:
        if n == 1:
            lo = hi = float(mu.masses_at(mu.group.identity_rows(1))[0])
            hi = lo + mu.dropped_mass
            meta.append(dict(n=n, support=len(mu), seconds=0.0))
        else:
            a = n // 2
            ca = cache.get(a)
            cb = ca if n - a == a else cache.get(n - a)
            lo, hi = pair_return(ca, cb)
            meta.append(dict(n=n, support=len(cb), dropped=cb.dropped_mass,
                             deficit_l2=cb.deficit_l2,
                             seconds=round(time.perf_counter() - t0, 3)))
            if plan.strategy == "direct":
                cache.forget_below(a)
        vals.append(lo)
        los.append(lo)
        his.append(hi)
        if progress:
            progress(meta[-1])
    return ReturnSeries(np.array(n_list), np.array(vals), np.array(los), np.array(his),
                        label=mu.label, meta=meta)


def largest_certified_window(series: ReturnSeries, max_rel: float = 0.1):
    """(n_first, n_last) of the longest run of consecutive certified points."""
    ok = series.rel_error < max_rel
    best, start = (0, -1), None
    for i, flag in enumerate(list(ok) + [False]):
        if flag and start is None:
            start = i
        if not flag and start is not None:
            if i - start > best[1] - best[0] + 1:
                best = (start, i - 1)
            start = None
    if best[1] < best[0]:
        return None
    return int(series.n[best[0]]), int(series.n[best[1]])


def fit_exponent(series: ReturnSeries, window=None, max_rel: float = 0.1):
    """OLS slope of log value against log n over the window -> (slope, stderr)."""
    n = series.n
    sel = np.ones(len(n), dtype=bool) if window is None else (n >= window[0]) & (n <= window[1])
    if sel.sum() < 4:
        raise CertificationError(f"only {int(sel.sum())} points in window {window}; need >= 4")
    rel = series.rel_error[sel]
    if np.any(rel >= max_rel):
        bad = n[sel][rel >= max_rel].tolist()
        raise CertificationError(f"certified relative error >= {max_rel} at n = {bad}")
    if np.all(series.value[sel] == series.value[sel][0]):
        return 0.0, 0.0
    res = stats.linregress(np.log(n[sel]), np.log(series.value[sel]))
    return float(res.slope), float(res.stderr)


# -- near-diagonal -----------------------------------------------------------------

@dataclass
class NearDiagonalReport:
    n: int
    radius: int
    ratios: np.ndarray
    rows: np.ndarray
    min_ratio: float
    max_ratio: float
    max_rel_error: float

    @property
    def spread(self) -> float:
        return self.max_ratio / self.min_ratio if self.min_ratio > 0 else math.inf


def near_diagonal_check(mu: SparseMeasure, n: int, eta: float, metric: WordMetric,
                        alpha: float, plan: ConvolutionPlan | None = None,
                        d: float | None = None, max_rel: float = 0.1) -> NearDiagonalReport:
    """mu^(n)(g) * n^(d/alpha) over {g : |g|^alpha <= eta n}."""
    d = metric.group.known_growth_degree if d is None else d
    P = power(mu, n, plan)
    r = int(math.floor((eta * n) ** (1.0 / alpha) + 1e-9))
    rows = metric.ball_rows(r)
    L = metric.lengths(rows)
    rows = rows[L.astype(float) ** alpha <= eta * n]
    vals = P.masses_at(rows)
    slack = min(P.dropped_mass, P.deficit_l2)
    rel = np.where(vals > 0, slack / np.maximum(vals, 1e-300), np.inf)
    if np.max(rel) >= max_rel:
        raise CertificationError(f"near-diagonal table not certified: max rel error {np.max(rel):.3g}")
    ratios = vals * n ** (d / alpha)
    return NearDiagonalReport(n, r, ratios, rows, float(ratios.min()), float(ratios.max()),
                              float(np.max(rel)))
