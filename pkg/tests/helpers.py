"""Shared strategies and builders for the test suite."""
import numpy as np
from hypothesis import strategies as st

from dilutelab.lattice import HoppingKernel


def random_kernel(rng, d=1, radius=2, complex_=True):
    coeffs = {}
    offs = [tuple(k) for k in np.ndindex(*(2 * radius + 1,) * d)]
    for k in offs:
        k = tuple(x - radius for x in k)
        mk = tuple(-x for x in k)
        if k in coeffs:
            continue
        if k == mk:
            coeffs[k] = rng.normal()
        else:
            v = rng.normal() + (1j * rng.normal() if complex_ else 0)
            coeffs[k], coeffs[mk] = v * 0.3, np.conj(v) * 0.3
    return HoppingKernel(coeffs, normalize=False)


@st.composite
def kernels(draw, d=1):
    seed = draw(st.integers(0, 2**31))
    radius = draw(st.integers(1, 3))
    return random_kernel(np.random.default_rng(seed), d, radius, draw(st.booleans()))
