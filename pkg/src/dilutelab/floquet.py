"""Periodic approximations: Floquet fibers, periodic IDS and the low-energy event."""
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._parallel import chunks, ordered_map
from ._rng import replica_rng
from ._stats import mean_ci, proportion
from .errors import ValidationError
from .lattice import FiniteOperator, check_capacity

BASES = ("momentum", "position")


@lru_cache(maxsize=16)
def _cell_indices(n, d):
    return np.array(list(itertools.product(range(n), repeat=d)), dtype=np.int64).reshape(-1, d)


@lru_cache(maxsize=8)
def _difference_index(n, d):
    k = _cell_indices(n, d)
    diff = (k[:, None, :] - k[None, :, :]) % n
    return np.ravel_multi_index(tuple(np.moveaxis(diff, -1, 0)), (n,) * d)


@dataclass(frozen=True, eq=False)
class FloquetFiber:
    """Fiber ``M^N(theta) = H^N(theta) + V^N`` on a cell of side ``2N+1``."""

    N: int
    theta: np.ndarray
    basis: str
    matrix: np.ndarray
    potential: np.ndarray = field(repr=False)

    @property
    def cell_side(self):
        return 2 * self.N + 1

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    def as_operator(self):
        return FiniteOperator(self.matrix, self.basis, ("cell", self.cell_side),
                              {"theta": tuple(self.theta)})


def fiber_kinetic(kernel, theta, N):
    """Kinetic eigenvalues ``h(theta + 2 pi k / (2N+1))`` in lexicographic ``k``."""
    n = 2 * N + 1
    k = _cell_indices(n, kernel.dimension)
    return kernel.symbol(np.asarray(theta, dtype=float) + 2 * np.pi * k / n)


def _position_kinetic(kernel, theta, n):
    d = kernel.dimension
    x = _cell_indices(n, d)
    m = np.zeros((n ** d, n ** d), dtype=complex)
    rows = np.arange(n ** d)
    for j, amp in zip(kernel.offsets, kernel.amplitudes):
        y = x - j
        wrap = np.floor_divide(y, n)  # x - j = y mod n + n * wrap
        cols = np.ravel_multi_index(tuple((y % n).T), (n,) * d)
        # psi_{y + n m} = exp(-i theta . n m) psi_y
        np.add.at(m, (rows, cols), amp * np.exp(-1j * n * (wrap @ theta)))
    return m


def assemble_floquet(kernel, cell_potential, theta, N, basis="momentum", memory_budget=None):
    """Assemble the Floquet fiber at quasi-momentum ``theta``.

    In the momentum basis the kinetic part is ``diag h(theta + 2 pi k/n)`` and
    the potential block is ``W[k, k'] = n^-d sum_l w_l exp(-2 pi i (k-k').l/n)``.
    In the position basis the potential is diagonal and the kernel is folded
    onto the cell with twist ``exp(-i theta . n m)`` for a wrap by ``n m``.
    """
    if basis not in BASES:
        raise ValidationError(f"basis must be one of {BASES}")
    d = kernel.dimension
    n = 2 * N + 1
    w = np.asarray(cell_potential, dtype=float)
    if w.shape != (n,) * d:
        if w.size == n ** d:
            w = w.reshape((n,) * d)
        else:
            raise ValidationError(f"cell potential must have shape {(n,) * d}, got {w.shape}")
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (d,)).copy()
    check_capacity(n ** d, 16, memory_budget)
    if basis == "momentum":
        w_hat = np.fft.fftn(w).ravel() / n ** d  # index q = k - k' mod n
        mat = w_hat[_difference_index(n, d)]
        mat[np.diag_indices(n ** d)] += fiber_kinetic(kernel, theta, N)
        # exact Hermitian symmetry, not just to rounding
        mat = 0.5 * (mat + mat.conj().T)
    else:
        mat = _position_kinetic(kernel, theta, n)
        mat[np.diag_indices(n ** d)] += w.ravel()
    return FloquetFiber(N, theta, basis, mat, w)


def theta_grid(N, d, resolution):
    """Midpoint product grid on ``[-pi/n, pi/n]^d``, shape ``(resolution^d, d)``."""
    if resolution < 1:
        raise ValidationError("theta resolution must be at least 1")
    n = 2 * N + 1
    h = 2 * np.pi / n / resolution
    axis = -np.pi / n + (np.arange(resolution) + 0.5) * h
    return np.array(list(itertools.product(axis, repeat=d))).reshape(-1, d)


def fiber_spectra(kernel, cell_potential, N, thetas, basis="momentum"):
    """Eigenvalues of each fiber, shape ``(len(thetas), n^d)``."""
    return np.stack([assemble_floquet(kernel, cell_potential, t, N, basis).eigenvalues()
                     for t in thetas])


@dataclass(frozen=True, eq=False)
class PeriodicIds:
    N: int
    resolution: int
    energies: np.ndarray
    values: np.ndarray
    ci: np.ndarray
    replicas: int
    seed: int
    per_replica: np.ndarray = field(repr=False, default=None)


def _cell_sampler(spec, n, d, seed):
    def draw(r):
        return spec.sample(replica_rng(seed, r, 1), (n,) * d)
    return draw


def periodic_ids(kernel, spec, N, resolution, energies, replicas, seed, threads=None,
                 basis="momentum"):
    """Replica average of the quasi-momentum integrated fiber counts.

    For each potential the count of fiber eigenvalues ``<= E`` is averaged
    over the midpoint theta grid and divided by ``n^d``, so the value tends to
    1 above the spectrum.
    """
    if replicas < 1:
        raise ValidationError("replicas must be at least 1")
    d = kernel.dimension
    n = 2 * N + 1
    energies = np.sort(np.atleast_1d(np.asarray(energies, dtype=float)))
    thetas = theta_grid(N, d, resolution)
    draw = _cell_sampler(spec, n, d, seed)

    def task(idx):
        out = np.empty((len(idx), len(energies)))
        for i, r in enumerate(idx):
            lam = fiber_spectra(kernel, draw(r), N, thetas, basis)
            counts = np.stack([np.searchsorted(row, energies, side="right") for row in lam])
            out[i] = counts.mean(axis=0) / n ** d
        return out

    frac = np.concatenate(ordered_map(task, chunks(replicas, 16), threads))
    mean, ci = mean_ci(frac, axis=0)
    return PeriodicIds(N, resolution, energies, mean, ci, replicas, int(seed), frac)


def lowest_fiber_eigenvalue(kernel, cell_potential, N, thetas, basis="momentum"):
    return float(min(np.linalg.eigvalsh(assemble_floquet(kernel, cell_potential, t, N, basis).matrix)[0]
                     for t in thetas))


def prob_omega_event(kernel, spec, energy, N, resolution, replicas, seed, threads=None):
    """Frequency of ``min_theta lambda_min(M^N(theta)) <= E`` over replicas.

    The result is a :class:`Proportion`; zero hits give the rule-of-three bound.
    """
    d = kernel.dimension
    n = 2 * N + 1
    thetas = theta_grid(N, d, resolution)
    draw = _cell_sampler(spec, n, d, seed)

    def task(idx):
        return [lowest_fiber_eigenvalue(kernel, draw(r), N, thetas) <= energy for r in idx]

    hits = sum(sum(part) for part in ordered_map(task, chunks(replicas, 32), threads))
    return proportion(hits, replicas)


def exact_omega_probability(kernel, rho, energy, N, resolution):
    """Bernoulli(rho) probability of the event by enumerating all cells (d = 1)."""
    if kernel.dimension != 1:
        raise ValidationError("enumeration is implemented for d = 1")
    n = 2 * N + 1
    if n > 15:
        raise ValidationError("enumeration limited to cells of at most 15 sites")
    thetas = theta_grid(N, 1, resolution)
    total = 0.0
    for bits in itertools.product((0.0, 1.0), repeat=n):
        k = sum(bits)
        if lowest_fiber_eigenvalue(kernel, np.array(bits), N, thetas) <= energy:
            total += rho ** k * (1 - rho) ** (n - k)
    return total


@dataclass(frozen=True)
class Sandwich:
    estimate: float
    estimate_ci: float
    lower: float
    lower_ci: float
    upper: float
    upper_ci: float
    tail: float

    @property
    def holds(self):
        lo = self.lower - self.tail - self.lower_ci - self.estimate_ci
        hi = self.upper + self.tail + self.upper_ci + self.estimate_ci
        return lo <= self.estimate <= hi


def sandwich_check(kernel, spec, energy, nu, N, ids_curve, resolution=3, replicas=500,
                   seed=0, tail_exponent=1.0, threads=None):
    """Compare a box IDS estimate with periodic IDS at ``E -/+ nu``.

    ``ids_curve`` is an :class:`IdsCurve` containing ``energy``. The tail
    term is ``exp(-nu^-tail_exponent)``.
    """
    idx = np.flatnonzero(np.isclose(ids_curve.energies, energy))
    if not len(idx):
        raise ValidationError("ids_curve does not contain the requested energy")
    i = idx[0]
    per = periodic_ids(kernel, spec, N, resolution, [energy - nu, energy + nu], replicas, seed,
                       threads)
    tail = math.exp(-nu ** -tail_exponent)
    return Sandwich(float(ids_curve.values[i]), float(ids_curve.ci[i]), float(per.values[0]),
                    float(per.ci[0]), float(per.values[1]), float(per.ci[1]), tail)
