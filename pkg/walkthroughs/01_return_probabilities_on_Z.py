"""
Return probabilities of a heavy-tailed walk on the integers
============================================================

Builds the truncated stable-like measure on Z, pushes it through the
convolution engine and fits the decay exponent of the return probability.
Every value comes with a certified interval [lo, hi].
"""
import numpy as np

from stablewalk import (ConvolutionPlan, SparseMeasure, WordMetric, build_mu_alpha, fit_exponent,
                        get_group, return_series)

Z = get_group("Z^1")
metric = WordMetric(Z)

for alpha in (1.0, 1.5):
    mu = build_mu_alpha(metric, alpha, 20000)
    print(f"alpha={alpha}: support {len(mu)} points")

    n_list = [64, 128, 256, 512, 1024, 2048, 4096]
    series = return_series(mu, n_list, ConvolutionPlan())
    for n, lo, hi in zip(series.n, series.lo, series.hi):
        print(f"  n={int(n):5d}  {lo:.6e} <= mu^(n)(e) <= {hi:.6e}")

    slope, stderr = fit_exponent(series, (64, 4096), 0.1)
    print(f"  log-log slope {slope:.3f} +- {stderr:.3f}, expected about {-1 / alpha:.3f}\n")

# the lazy simple walk decays like n^-1/2, for comparison
lazy = SparseMeasure.from_rows(Z, [[-1], [0], [1]], np.array([0.25, 0.5, 0.25]), symmetric=True)
series = return_series(lazy, [256, 512, 1024, 2048, 4096], ConvolutionPlan())
print("lazy walk slope:", round(fit_exponent(series, (256, 4096), 0.1)[0], 3))
