"""
Continuum models
================

Finite differences for -Laplacian + V on an interval, Poisson clouds of
bumps, and the Bloch band bottom of the periodic background.
"""
import math

import numpy as np

from dilutelab.continuum import (ContinuumModel, PeriodicBackground, bloch_band_edge, box_bump, continuum_ids,
                                 ground_state, sample_poisson_cloud)

# %% Second-order convergence of the Dirichlet ground state on [-2, 2].
ell = 4.0
prev = None
for h in (0.2, 0.1, 0.05, 0.025):
    err = abs(ground_state(ContinuumModel(1, ell, h)) - math.pi ** 2 / ell ** 2)
    ratio = "" if prev is None else f"  ratio {prev / err:.2f}"
    print(f"h={h:<6} error={err:.3e}{ratio}")
    prev = err

# %% Void probability of a Poisson cloud with mean count 2.
zeros = np.mean([sample_poisson_cloud(0.5, [0], [4], 3, r).count == 0 for r in range(10_000)])
print(f"P(k=0) = {zeros:.4f}, e^-2 = {math.exp(-2):.4f}")

# %% IDS of a Poisson-Anderson model against the free Weyl law sqrt(E)/pi.
model = ContinuumModel(1, 40.0, 0.25, "poisson", 0.3, box_bump(1.0, 1.0))
free = ContinuumModel(1, 40.0, 0.25)
es = np.array([0.1, 0.5, 1.0, 2.0])
ids = continuum_ids(model, es, 50, seed=4)
ref = continuum_ids(free, es, 1, seed=0)
for e, v, f in zip(es, ids.values, ref.values):
    print(f"E={e:.1f}  N_poisson={v:.4f}  N_free={f:.4f}  sqrt(E)/pi={math.sqrt(e) / math.pi:.4f}")

# %% The lowest Bloch band of a cosine background has a simple, quadratic bottom.
edge = bloch_band_edge(ContinuumModel(1, 9.0, 0.1, background=PeriodicBackground(3, "cosine", 0.5)))
print(f"gap to second band at theta=0: {edge.gap_at_bottom:.4f}, curvature {edge.curvature:.4f}")
