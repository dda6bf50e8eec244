"""
Periodic approximations
=======================

A random potential restricted to a cell of side 2N+1 and repeated
periodically decomposes into Floquet fibers. Their integrated counts bracket
the box IDS once the energy window nu is wide compared with 1/N.
"""
import numpy as np

from dilutelab.disorder import DisorderSpec
from dilutelab.floquet import (assemble_floquet, exact_omega_probability, periodic_ids, prob_omega_event,
                               sandwich_check)
from dilutelab.lattice import Box, laplacian
from dilutelab.spectra import estimate_ids

lap = laplacian(1)
N = 6
rng = np.random.default_rng(0)
w = DisorderSpec.bernoulli(0.3).sample(rng, (2 * N + 1,))

# %% The same fiber in two bases. Momentum: diagonal kinetic part plus the
# circulant potential block. Position: diagonal potential plus a twisted hopping.
theta = np.array([0.1])
a = assemble_floquet(lap, w, theta, N, "momentum").eigenvalues()
b = assemble_floquet(lap, w, theta, N, "position").eigenvalues()
print("largest eigenvalue gap between bases:", np.max(np.abs(a - b)))

# %% The probability that the periodic operator has spectrum below a small E,
# estimated and enumerated exactly over all 2^7 cells.
spec = DisorderSpec.bernoulli(0.5)
est = prob_omega_event(lap, spec, 0.25, 3, 3, replicas=4000, seed=1)
print(f"P(min fiber eigenvalue <= 0.25): MC {est.estimate:.4f} +- {est.ci:.4f}, "
      f"exact {exact_omega_probability(lap, 0.5, 0.25, 3, 3):.4f}")

# %% Sandwich: box IDS at E between periodic IDS at E - nu and E + nu.
spec = DisorderSpec.bernoulli(0.3)
e, nu = 0.5, 0.05
curve = estimate_ids(lap, spec, Box.centered(1, 1000), [e], 500, seed=2)
s = sandwich_check(lap, spec, e, nu, 41, curve, resolution=3, replicas=500, seed=3)
print(f"periodic N(E-nu) = {s.lower:.4f}, box N(E) = {s.estimate:.4f}, periodic N(E+nu) = {s.upper:.4f}")
print("sandwich holds:", s.holds)

# %% Convergence of the periodic IDS in N at a fixed energy.
for n in (4, 8, 16, 32):
    per = periodic_ids(lap, spec, n, 3, [e], 100, seed=4)
    print(f"N={n:2d}  N_per(E)={per.values[0]:.4f} +- {per.ci[0]:.4f}")
