"""Monte Carlo walks X_k = X_{k-1} * step_k and exit-time statistics."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import UsageError
from .measures import Sampler
from .metric import WordMetric


@dataclass
class WalkStats:
    trials: int
    horizon: int
    sup_disp: np.ndarray  # max_{k<=n} |X_k| per trial
    end_disp: np.ndarray  # |X_n| per trial
    censored: np.ndarray  # some |X_k| fell outside the metric's reach
    seed: int
    workers: int = 1
    bias_bound: float = 0.0  # total variation to the untruncated walk

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "sup_disp", "end_disp"])
            for i, (s, e) in enumerate(zip(self.sup_disp.tolist(), self.end_disp.tolist())):
                w.writerow([i, s, e])


BLOCK = 1000  # trials per independently seeded block


def _lengths(metric, norm, X):
    if norm is not None:
        return np.asarray(norm(X), dtype=float)
    return metric.lengths(X).astype(float)


def _run_chunk(sampler, n, trials, ss, metric, norm):
    rng = np.random.default_rng(ss)
    g = sampler.group
    X = g.identity_rows(trials)
    sup = np.zeros(trials)
    censored = np.zeros(trials, dtype=bool)
    end = np.zeros(trials)
    for _ in range(n):
        X = g.mul(X, sampler.draw_rows(trials, rng))
        L = _lengths(metric, norm, X)
        miss = L < 0
        censored |= miss
        np.maximum(sup, np.where(miss, 0.0, L), out=sup)
        end = L
    end = np.where(end < 0, np.nan, end)
    return sup, end, censored


def simulate_walk(sampler: Sampler, n: int, trials: int, seed: int, *,
                  metric: WordMetric | None = None, norm=None, workers: int = 1) -> WalkStats:
    """Run independent walks of n steps, recording sup and final displacement.

    Trials are cut into blocks of BLOCK, each with its own seed spawned from
    ``seed``; ``workers`` only decides how many blocks run at once, so the
    output depends on (seed, trials) alone.  Displacements that the metric
    cannot resolve are censored: they are flagged and left out of the
    running maximum, and the final value becomes NaN.
    """
    if trials < 1:
        raise UsageError("trials must be >= 1")
    if n < 0:
        raise UsageError("n must be >= 0")
    if metric is None and norm is None:
        metric = WordMetric(sampler.group)
    nblocks = -(-trials // BLOCK)
    workers = max(1, min(int(workers), nblocks))
    seqs = np.random.SeedSequence(seed).spawn(nblocks)
    sizes = [min(BLOCK, trials - i * BLOCK) for i in range(nblocks)]
    jobs = [(sampler, n, sz, ss, metric, norm) for sz, ss in zip(sizes, seqs)]
    if workers == 1:
        parts = [_run_chunk(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _run_chunk(*a), jobs))
    sup, end, cens = (np.concatenate(p) for p in zip(*parts))
    return WalkStats(trials, n, sup, end, cens, seed, workers,
                     bias_bound=min(1.0, n * sampler.bias_bound))


@dataclass(frozen=True)
class ExitEstimate:
    gamma: float
    threshold: float
    exceed: int
    trials: int
    estimate: float
    ci_low: float
    ci_high: float
    censored: int


def exit_time_stats(ws: WalkStats, gamma: float, alpha: float,
                    confidence: float = 0.95) -> ExitEstimate:
    """Fraction of trials with sup_k |X_k| >= gamma n^(1/alpha), Clopper-Pearson CI.

    Censored trials count as exceedances, which keeps the estimate an upper
    bound for the empirical law.
    """
    if ws.trials < 1:
        raise UsageError("empty WalkStats")
    thr = gamma * ws.horizon ** (1.0 / alpha)
    hit = (ws.sup_disp >= thr) | ws.censored
    k = int(hit.sum())
    ci = stats.binomtest(k, ws.trials).proportion_ci(confidence, method="exact")
    return ExitEstimate(gamma, thr, k, ws.trials, k / ws.trials, ci.low, ci.high,
                        int(ws.censored.sum()))
