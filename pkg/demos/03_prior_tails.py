"""The sparsity prior puts little mass far from the origin.

Draws from the truncated heavy-tailed prior and compares the empirical tail
P(sum |lambda_j| / tau >= s) with the analytic bound M / (s - M)^2.
"""
import numpy as np

from sparsema.prior import PriorConfig, sample, tail_mass_bound

rng = np.random.default_rng(3)
for M in (1, 2, 3):
    cfg = PriorConfig(tau=1.0, radius=1e6, dim=M)
    draws = sample(cfg, rng, 100_000)
    l1 = np.abs(draws).sum(axis=1)
    for s in range(2 * M + 1, 5 * M + 1, M):
        print(f"M={M} s={s:2d}: empirical {np.mean(l1 >= s):.5f}  "
              f"bound {tail_mass_bound(M, s):.5f}")
