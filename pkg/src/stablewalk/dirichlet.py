"""Dirichlet forms, shift energies and spectral-profile upper bounds.

For f supported on a finite set F = {x_1, ..., x_m} and a measure of total
mass M, write K[i, j] = mu(x_i^-1 x_j).  Splitting the double sum
1/2 sum_x sum_y |f(xy) - f(x)|^2 mu(y) by whether x and xy lie in F gives

    E(f) = 1/2 sum_ij K_ij (f_i - f_j)^2
           + 1/2 sum_i f_i^2 (M - row_i) + 1/2 sum_j f_j^2 (M - col_j),

a sum of non-negative terms, and E(f) = f^T (M I - (K + K^T)/2) f.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .groups import Group, GroupElement
from .measures import SparseMeasure
from .metric import WordMetric
from .rows import RowIndex, as_rows


@dataclass
class TestFunction:
    """Finitely supported real function on a group."""

    __test__ = False  # not a pytest class

    group: Group
    rows: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.rows = as_rows(self.rows)
        self.values = np.asarray(self.values, dtype=float)
        keep = self.values != 0
        self.rows, self.values = self.rows[keep], self.values[keep]
        self._index = RowIndex(self.rows)

    @classmethod
    def from_dict(cls, group: Group, table: dict, label: str = "") -> "TestFunction":
        rows = [g.coords for g in table]
        return cls(group, np.array(rows, dtype=np.int64).reshape(-1, group.dim),
                   list(table.values()), label)

    @classmethod
    def indicator(cls, group: Group, rows, label: str = "") -> "TestFunction":
        rows = as_rows(rows)
        return cls(group, rows, np.ones(len(rows)), label)

    def at(self, rows) -> np.ndarray:
        pos = self._index.find(as_rows(rows))
        return np.where(pos >= 0, self.values[np.maximum(pos, 0)], 0.0)

    def __call__(self, g: GroupElement) -> float:
        return float(self.at(g.row[None])[0])

    @property
    def support_size(self) -> int:
        return len(self.rows)

    def norm2(self) -> float:
        return float(np.dot(self.values, self.values))

    def scaled(self, c: float) -> "TestFunction":
        return TestFunction(self.group, self.rows, c * self.values, self.label)


def kernel_matrix(mu: SparseMeasure, rows) -> np.ndarray:
    """K[i, j] = mu(x_i^-1 x_j) over the given rows."""
    g = mu.group
    X = as_rows(rows)
    m = len(X)
    Xinv = g.inv(X)
    K = np.empty((m, m))
    step = max(1, 2_000_000 // max(m, 1))
    for i in range(0, m, step):
        A = Xinv[i:i + step]
        Y = g.mul(np.repeat(A, m, axis=0), np.tile(X, (len(A), 1)))
        K[i:i + len(A)] = mu.masses_at(Y).reshape(len(A), m)
    return K


def form_matrix(mu: SparseMeasure, rows) -> np.ndarray:
    """Matrix of E restricted to functions supported on rows."""
    K = kernel_matrix(mu, rows)
    return mu.total * np.eye(len(K)) - 0.5 * (K + K.T)


def _energy(K: np.ndarray, M: float, f: np.ndarray) -> float:
    diff = f[:, None] - f[None, :]
    inner = 0.5 * float(np.sum(K * diff * diff))
    out_r = 0.5 * float(np.dot(f * f, M - K.sum(1)))
    out_c = 0.5 * float(np.dot(f * f, M - K.sum(0)))
    return inner + max(out_r, 0.0) + max(out_c, 0.0)


def dirichlet_form(mu: SparseMeasure, f: TestFunction) -> float:
    """E_mu(f, f) = 1/2 sum_{x,y} |f(xy) - f(x)|^2 mu(y) over the represented measure."""
    if f.group.key != mu.group.key:
        raise UsageError("function and measure live on different groups")
    if f.support_size == 0:
        return 0.0
    K = kernel_matrix(mu, f.rows)
    return _energy(K, mu.total, f.values)


def shift_energy(f: TestFunction, h: GroupElement) -> float:
    """sum_x |f(xh) - f(x)|^2, exactly."""
    g = f.group
    if f.support_size == 0:
        return 0.0
    n = len(f.rows)
    H = np.tile(h.row, (n, 1))
    inner = float(np.sum((f.at(g.mul(f.rows, H)) - f.values) ** 2))
    # points x = y h^-1 (y in supp f) outside supp f contribute f(y)^2
    outside = ~f._index.contains(g.mul(f.rows, g.inv(H)))
    return inner + float(np.sum(f.values[outside] ** 2))


# -- families ----------------------------------------------------------------------

def tent(metric: WordMetric, R: int) -> TestFunction:
    rows = metric.ball_rows(R)
    return TestFunction(metric.group, rows, R - metric.lengths(rows), f"tent(R={R})")


def ball_indicator(metric: WordMetric, r: int) -> TestFunction:
    return TestFunction.indicator(metric.group, metric.ball_rows(r), f"1_B({r})")


def random_signs(metric: WordMetric, r: int, count: int, seed: int) -> list[TestFunction]:
    rng = np.random.default_rng(seed)
    rows = metric.ball_rows(r)
    return [TestFunction(metric.group, rows, rng.choice([-1.0, 1.0], size=len(rows)),
                         f"signs(B({r}),#{k})") for k in range(count)]


def random_functions(metric: WordMetric, r: int, count: int, seed: int) -> list[TestFunction]:
    """Standard normal values on B(r)."""
    rng = np.random.default_rng(seed)
    rows = metric.ball_rows(r)
    return [TestFunction(metric.group, rows, rng.standard_normal(len(rows)),
                         f"gauss(B({r}),#{k})") for k in range(count)]


def zeta_function(norm, w_star, R: float, budget: int = 10**7) -> TestFunction:
    """zeta_R(g) = (R - ||g||^{w*})_+ for a WeightedNorm evaluator."""
    T = R ** (1.0 / float(w_star))
    rows = norm.box_rows(T, budget)
    vals = norm.values(rows)
    radii = norm.box_radii(T)
    coords = np.concatenate([norm.basis.coordinates_rows(norm.group.mul(
        rows[k::len(norm.reps)], np.tile(x.inverse().row, (len(rows[k::len(norm.reps)]), 1))))
        for k, (x, _) in enumerate(norm.reps)])
    on_edge = np.any(np.abs(coords) == np.array(radii), axis=1) & (np.array(radii) > 0).any()
    edge_vals = np.concatenate([vals[k::len(norm.reps)] for k in range(len(norm.reps))])[on_edge]
    if edge_vals.size and np.min(edge_vals) ** float(w_star) < R - 1e-9:
        raise UsageError(f"zeta_R support for R={R} exceeds the enumerated box")
    z = np.maximum(R - vals ** float(w_star), 0.0)
    return TestFunction(norm.group, rows, z, f"zeta(R={R})")


def default_family(metric: WordMetric, radii, *, seed: int = 0, n_random: int = 100,
                   random_radius: int | None = None, zeta_norm=None, w_star=None,
                   zeta_R=()) -> list[TestFunction]:
    """Ball indicators, tents, optional zeta_R and seeded random sign functions."""
    fam = []
    for r in radii:
        fam.append(ball_indicator(metric, r))
        if r >= 1:
            fam.append(tent(metric, r))
    if zeta_norm is not None:
        for R in zeta_R:
            fam.append(zeta_function(zeta_norm, w_star, R))
    if n_random:
        rr = random_radius if random_radius is not None else min(radii)
        fam.extend(random_signs(metric, rr, n_random, seed))
    return fam


# -- pseudo-Poincare scan --------------------------------------------------------

def length_power(metric: WordMetric, alpha: float):
    def normalizer(h: GroupElement) -> float:
        return float(metric.word_length(h)) ** alpha
    normalizer.__name__ = f"|h|^{alpha}"
    return normalizer


@dataclass
class PPRow:
    h: tuple
    normalizer: float
    max_ratio: float
    normalized: float
    argmax: str
    zero_zero: int  # 0/0 ratios recorded as 0
    violations: int  # E = 0 with positive shift energy


@dataclass
class PPReport:
    rows: list[PPRow]

    @property
    def constant(self) -> float:
        return max(r.normalized for r in self.rows)

    @property
    def spread(self) -> float:
        vals = [r.normalized for r in self.rows if r.normalizer > 0]
        lo = min(vals)
        return max(vals) / lo if lo > 0 else math.inf

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "normalizer", "max_ratio", "normalized", "argmax", "zero_zero",
                        "violations"])
            for r in self.rows:
                w.writerow([" ".join(map(str, r.h)), repr(r.normalizer), repr(r.max_ratio),
                            repr(r.normalized), r.argmax, r.zero_zero, r.violations])


def pp_scan(mu: SparseMeasure, family, h_list, normalizer) -> PPReport:
    """max_f shift_energy(f, h) / (normalizer(h) E(f)) for each h."""
    if not family or not h_list:
        raise UsageError("pp_scan needs a nonempty family and h list")
    energies = [dirichlet_form(mu, f) for f in family]
    out = []
    for h in h_list:
        nrm = normalizer(h)
        best, arg, zz, bad = 0.0, "", 0, 0
        for f, E in zip(family, energies):
            s = shift_energy(f, h)
            if E <= 0:
                if s > 0:
                    bad += 1
                else:
                    zz += 1
                continue
            if s / E > best:
                best, arg = s / E, f.label
        normalized = best / nrm if nrm > 0 else 0.0
        out.append(PPRow(h.coords, nrm, best, normalized, arg, zz, bad))
    return PPReport(out)


# -- spectral profile -------------------------------------------------------------------

@dataclass
class ProfileTable:
    sizes: np.ndarray  # distinct support sizes
    upper: np.ndarray  # min Rayleigh quotient over members of size <= v
    entries: list = field(default_factory=list)  # (label, size, quotient)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["v", "lambda_upper"])
            for v, q in zip(self.sizes.tolist(), self.upper.tolist()):
                w.writerow([v, repr(q)])


def rayleigh(mu: SparseMeasure, f: TestFunction) -> float:
    return dirichlet_form(mu, f) / f.norm2()


def spectral_profile_upper(mu: SparseMeasure, family) -> ProfileTable:
    if not family:
        raise UsageError("spectral_profile_upper needs a nonempty family")
    entries = [(f.label, f.support_size, rayleigh(mu, f)) for f in family if f.support_size]
    sizes = np.array(sorted({v for _, v, _ in entries}))
    upper = np.array([min(q for _, v, q in entries if v <= s) for s in sizes])
    return ProfileTable(sizes, upper, entries)


def rayleigh_minimum(mu: SparseMeasure, rows) -> float:
    """Smallest eigenvalue of E restricted to functions supported on rows."""
    return float(np.linalg.eigvalsh(form_matrix(mu, rows))[0])


@dataclass
class OracleRow:
    v: int
    upper: float
    radius: int
    ball_size: int
    dense_min: float

    @property
    def ok(self) -> bool:
        return self.upper >= self.dense_min * (1 - 1e-9) - 1e-12


def profile_oracle_check(mu: SparseMeasure, metric: WordMetric, family,
                         max_elements: int = 400) -> list[OracleRow]:
    """Compare the family bound at each support size with the dense minimum.

    For each tested size v the members of size <= v that sit inside a ball
    B(r) with at most ``max_elements`` points are compared with the smallest
    eigenvalue of the form on that ball, which no such member can beat.
    """
    out = []
    dense = {}
    members = []
    for f in family:
        if not f.support_size:
            continue
        r = int(metric.lengths(f.rows).max())
        if metric.ball_count(r) <= max_elements:
            members.append((f.support_size, r, rayleigh(mu, f)))
    for v in sorted({m[0] for m in members}):
        sub = [m for m in members if m[0] <= v]
        r = max(m[1] for m in sub)
        if r not in dense:
            dense[r] = rayleigh_minimum(mu, metric.ball_rows(r))
        out.append(OracleRow(v, min(m[2] for m in sub), r, metric.ball_count(r), dense[r]))
    return out


# -- zeta_R test and form comparison ----------------------------------------------

@dataclass
class ZetaRow:
    R: float
    part: int
    ratio: float
    scaled: float  # ratio * R^(1/w*)
    support: int
    norm2: float


def zeta_test(mu_parts, norm, w_star, R_list, budget: int = 10**7) -> list[ZetaRow]:
    out = []
    for R in R_list:
        z = zeta_function(norm, w_star, R, budget)
        for i, mu in enumerate(mu_parts):
            q = rayleigh(mu, z)
            out.append(ZetaRow(R, i, q, q * R ** (1.0 / float(w_star)), z.support_size,
                               z.norm2()))
    return out


@dataclass
class FormInterval:
    lo: float
    hi: float
    used: int
    excluded: int  # zero-energy denominators


def form_comparison(mu1: SparseMeasure, mu2: SparseMeasure, family) -> FormInterval:
    """[min, max] of E_mu1(f) / E_mu2(f) over the family."""
    if mu1.group.key != mu2.group.key:
        raise UsageError("form_comparison needs measures on the same group")
    cache: dict[bytes, tuple] = {}
    ratios, excluded = [], 0
    for f in family:
        key = f.rows.tobytes()
        if key not in cache:
            cache[key] = (kernel_matrix(mu1, f.rows), kernel_matrix(mu2, f.rows))
        K1, K2 = cache[key]
        e1 = _energy(K1, mu1.total, f.values)
        e2 = _energy(K2, mu2.total, f.values)
        if e2 <= 0:
            excluded += 1
            continue
        ratios.append(e1 / e2)
    if not ratios:
        raise UsageError("every function had zero energy under the second measure")
    return FormInterval(min(ratios), max(ratios), len(ratios), excluded)
