"""
Dirichlet forms, shift energies and the spectral profile
=========================================================
"""
import numpy as np

from stablewalk import WordMetric, build_mu_alpha, get_group
from stablewalk.dirichlet import (default_family, dirichlet_form, length_power, pp_scan,
                                  profile_oracle_check, spectral_profile_upper, tent)

Z = get_group("Z^1")
metric = WordMetric(Z)
mu = build_mu_alpha(metric, 1.0, 2000)

f = tent(metric, 10)
print("energy of a tent of radius 10:", round(dirichlet_form(mu, f), 4))

# how much can a shift by h cost, relative to the energy?
family = default_family(metric, [1, 2, 4, 8, 16, 32], n_random=20, random_radius=8)
hs = [Z.element([h]) for h in (1, 2, 4, 8, 16)]
rep = pp_scan(mu, family, hs, length_power(metric, 1.0))
for row in rep.rows:
    print(f"  h={row.h[0]:3d}  max ratio {row.max_ratio:8.3f}  per |h| {row.normalized:.3f}  ({row.argmax})")
print("spread across h:", round(rep.spread, 3))

prof = spectral_profile_upper(mu, family)
print("\nspectral profile upper bound:")
for v, q in zip(prof.sizes[:8], prof.upper[:8]):
    print(f"  support <= {v:4d}: {q:.4f}")

rows = profile_oracle_check(mu, metric, family, max_elements=200)
print("dense check:", all(r.ok for r in rows), f"({len(rows)} sizes)")
print("smallest dense minimum seen:", np.round(min(r.dense_min for r in rows), 5))
