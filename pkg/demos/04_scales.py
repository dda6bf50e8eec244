"""
Scales and large deviations
===========================

The odd-ceiling scale plan ties the cell size to rho, coarse-graining
replaces Fourier-localized vectors by block-constant ones, and block means of
the potential obey Chernoff bounds.
"""
import numpy as np

from dilutelab.disorder import DisorderSpec
from dilutelab.scales import (block_means, build_scale_plan, chernoff_bound, coarse_grain, exact_bernoulli_tail,
                              fourier_localized, union_bound)

# %% A worked plan.
plan = build_scale_plan(0.1, 5, 3, 1)
print("\n".join(plan.trace))
print("identity:", plan.identity_holds(), " nested:", plan.nested, " R =", plan.R)

# %% Coarse-graining error shrinks like K / K'.
rng = np.random.default_rng(0)
K = 2
for ratio in (3, 9, 27):
    kp = ratio * K
    n = 5 * (2 * kp + 1)
    a = fourier_localized(n, K, 1, rng)
    err = np.linalg.norm(a - coarse_grain(a, block_half_side=2))
    print(f"K'/K={ratio:2d}  error={err:.4f}  error*K'/K={err * ratio:.3f}")

# %% A block-mean tail three ways: exact, Monte Carlo, Chernoff.
spec = DisorderSpec.bernoulli(0.2)
means = block_means(spec, 100, 100_000, seed=1)
print(f"P(mean <= 0.1): exact {exact_bernoulli_tail(100, 0.2, 0.1):.5f}, "
      f"MC {np.mean(means <= 0.1):.5f}, Chernoff {chernoff_bound(spec, 100, 0.1).bound:.5f}")
for R in (100, 1000, 10000):
    b = chernoff_bound(spec, R, 0.1)
    print(f"R={R:5d}  log bound / (R rho) = {b.log_bound / (R * 0.2):.5f}")

# %% Counting events in the union bound as rho shrinks.
for rho in (0.02, 0.01, 0.005, 0.002):
    p = build_scale_plan(rho, 6, 3, 0.5)
    u = union_bound(p, DisorderSpec.bernoulli(rho), 0.5, 2.0)
    print(f"rho={rho}  events={u.n_events}  worst={u.worst:.2e}  total={u.total:.2e}")
