"""Eigenvalue counting, finite-volume IDS and Lifschitz-tail scans."""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._parallel import chunks, ordered_map
from ._rng import replica_rng
from ._stats import Z95, line_fit, mean_ci
from .errors import ValidationError
from .lattice import Box, FiniteOperator, assemble_dirichlet

DIAG_THRESHOLD = 500
EIG_WINDOW = 1e-12
NUDGE = 1e-10


# ---------------------------------------------------------------------------
# inertia kernels


def sturm_counts(diag, off_sq, energies):
    """Number of eigenvalues ``< x`` of real-symmetric tridiagonal matrices.

    Parameters
    ----------
    diag : array, shape (..., n)
        Diagonals; leading axes are independent matrices.
    off_sq : array, shape (n-1,) or (..., n-1)
        Squared moduli of the off-diagonal entries.
    energies : array, shape (m,)

    Returns
    -------
    counts : int array, shape (..., m)
    """
    diag = np.asarray(diag, dtype=float)
    off_sq = np.broadcast_to(np.asarray(off_sq, dtype=float), diag.shape[:-1] + (diag.shape[-1] - 1,))
    x = np.asarray(energies, dtype=float)
    n = diag.shape[-1]
    q = diag[..., 0, None] - x
    counts = (q < 0).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for i in range(1, n):
            q = np.where(q == 0, 1e-300, q)
            q = diag[..., i, None] - x - off_sq[..., i - 1, None] / q
            counts += q < 0
    return counts


def _tridiagonal_parts(m):
    return np.real(np.diag(m)), np.abs(np.diag(m, -1)) ** 2


def _banded_negatives(a, x, b, pivot_tol):
    """LDL^H without pivoting on a band of half-width ``b``; None on breakdown."""
    n = a.shape[0]
    dtype = a.dtype
    dd = np.empty(n)
    low = np.zeros((n, b), dtype=dtype)  # low[i, t] = l_{i, i-b+t}
    neg = 0
    for i in range(n):
        row = np.zeros(b, dtype=dtype)
        for j in range(max(0, i - b), i):
            s = a[i, j]
            for k in range(max(0, i - b, j - b), j):
                s -= row[k - i + b] * np.conj(low[j, k - j + b]) * dd[k]
            row[j - i + b] = s / dd[j]
        piv = np.real(a[i, i]) - x
        for j in range(max(0, i - b), i):
            piv -= abs(row[j - i + b]) ** 2 * dd[j]
        if abs(piv) < pivot_tol:
            return None
        dd[i] = piv
        low[i] = row
        neg += piv < 0
    return int(neg)


def _bunch_kaufman_negatives(a, x):
    shifted = a - x * np.eye(a.shape[0], dtype=a.dtype)
    _, d, _ = linalg.ldl(shifted, hermitian=True)
    n = d.shape[0]
    neg = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0:
            neg += int(np.sum(np.linalg.eigvalsh(d[i:i + 2, i:i + 2]) < 0))
            i += 2
        else:
            neg += int(np.real(d[i, i]) < 0)
            i += 1
    return neg


def _negatives(a, x, bandwidth):
    if bandwidth <= 1:
        d, o = _tridiagonal_parts(a)
        return int(sturm_counts(d, o, [x])[0])
    n = a.shape[0]
    if bandwidth <= max(1, n // 8):
        tol = 1e-8 * max(1.0, np.abs(a).max())
        res = _banded_negatives(a, x, bandwidth, tol)
        if res is not None:
            return res
    return _bunch_kaufman_negatives(a, x)


@dataclass(frozen=True)
class CountInfo:
    count: int
    method: str
    energy: float
    nudged: bool


def count_below(op, energy, method="auto", diag_threshold=DIAG_THRESHOLD, return_info=False):
    """Number of eigenvalues ``<= energy`` of a Hermitian operator.

    ``method`` is ``"eig"`` (full diagonalization), ``"inertia"`` (Sylvester
    inertia of the shifted matrix: Sturm recurrence, banded LDL, or
    Bunch-Kaufman) or ``"auto"`` (diagonalize below ``diag_threshold``).

    An eigenvalue within ``1e-12`` of ``energy`` triggers a nudge to
    ``energy + 1e-10 (1 + |energy|)``; ``return_info=True`` reports it.
    """
    a = op.matrix if isinstance(op, FiniteOperator) else np.asarray(op)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("count_below needs a square matrix")
    n = a.shape[0]
    e = float(energy)
    if method == "auto":
        method = "eig" if n <= diag_threshold else "inertia"
    nudged = False
    if method == "eig":
        lam = np.linalg.eigvalsh(a)
        if n and np.min(np.abs(lam - e)) < EIG_WINDOW:
            e += NUDGE * (1 + abs(e))
            nudged = True
        count = int(np.searchsorted(lam, e, side="right"))
    elif method == "inertia":
        bw = op.bandwidth if isinstance(op, FiniteOperator) else FiniteOperator(a).bandwidth
        win = EIG_WINDOW
        below = _negatives(a, e - win, bw)
        upto = _negatives(a, e + win, bw)
        if below != upto:
            e += NUDGE * (1 + abs(e))
            nudged = True
            upto = _negatives(a, e, bw)
        count = upto
    else:
        raise ValidationError(f"unknown method {method!r}")
    if return_info:
        return CountInfo(count, method, e, nudged)
    return count


# ---------------------------------------------------------------------------
# IDS estimation


def free_ids_1d(energy):
    """Analytic IDS of the 1-d negative Laplacian, ``arccos(1 - E/2)/pi``."""
    e = np.clip(np.asarray(energy, dtype=float), 0, 4)
    return np.arccos(1 - e / 2) / np.pi


def laplacian_dirichlet_eigenvalues(n):
    k = np.arange(1, n + 1)
    return 2 - 2 * np.cos(k * np.pi / (n + 1))


@dataclass(frozen=True, eq=False)
class IdsCurve:
    energies: np.ndarray
    values: np.ndarray
    ci: np.ndarray
    replicas: int
    box: Box
    spec: object
    seed: int
    per_replica: np.ndarray = field(repr=False, default=None)

    @property
    def total_counts(self):
        return np.rint(self.per_replica * self.box.size).astype(np.int64).sum(axis=0)


def _is_tridiagonal_kernel(kernel):
    return kernel.dimension == 1 and kernel.radius <= 1 and kernel.is_real


class _Counter:
    """Counts eigenvalues ``<= E`` for one kernel/box, many potentials."""

    def __init__(self, kernel, box, memory_budget=None):
        self.kernel, self.box = kernel, box
        self.fast = _is_tridiagonal_kernel(kernel)
        if self.fast:
            self.h0 = float(np.real(kernel[0]))
            self.off_sq = abs(kernel[1]) ** 2
        else:
            self.base = assemble_dirichlet(kernel, box, memory_budget)

    def counts(self, potentials, energies):
        """``potentials`` shape (R, *box.shape) -> int counts (R, m)."""
        energies = np.asarray(energies, dtype=float)
        r = potentials.shape[0]
        v = potentials.reshape(r, -1)
        if self.fast:
            n = v.shape[1]
            # count(<= E) = count(< E') with E' the next float above E
            return sturm_counts(self.h0 + v, np.full(n - 1, self.off_sq), np.nextafter(energies, np.inf))
        out = np.empty((r, len(energies)), dtype=np.int64)
        for i in range(r):
            op = self.base.with_potential(v[i])
            if op.size <= DIAG_THRESHOLD:
                lam = np.linalg.eigvalsh(op.matrix)
                out[i] = np.searchsorted(lam, energies, side="right")
            else:
                out[i] = [count_below(op, e, method="inertia") for e in energies]
        return out


def _sample_batch(spec, shape, seed, replicas, stream=0):
    return np.stack([spec.sample(replica_rng(seed, r, stream), shape) for r in replicas])


def replica_counts(kernel, spec, box, energies, replicas, seed, threads=None, chunk=256):
    """Per-replica eigenvalue counts, shape ``(replicas, len(energies))``."""
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if replicas == 0:
        return np.zeros((0, len(energies)), dtype=np.int64)
    counter = _Counter(kernel, box)

    def task(idx):
        pots = _sample_batch(spec, box.shape, seed, idx)
        return counter.counts(pots, energies)

    parts = ordered_map(task, chunks(replicas, chunk), threads)
    return np.concatenate(parts, axis=0)


def estimate_ids(kernel, spec, box, energies, replicas, seed, threads=None):
    """Average of ``count_below / |box|`` over independent potentials."""
    if replicas < 1:
        raise ValidationError("replicas must be at least 1")
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    order = np.argsort(energies, kind="stable")
    energies = energies[order]
    frac = replica_counts(kernel, spec, box, energies, replicas, seed, threads) / box.size
    mean, ci = mean_ci(frac, axis=0)
    return IdsCurve(energies, mean, ci, replicas, box, spec, int(seed), frac)


def prob_eigenvalue_below(kernel, spec, box, energy, replicas, seed, threads=None):
    """Frequency of boxes whose lowest eigenvalue is ``<= energy``, and the IDS.

    Returns ``(frequency, ids_estimate)`` computed on the same replicas.
    """
    c = replica_counts(kernel, spec, box, [energy], replicas, seed, threads)[:, 0]
    return float(np.mean(c > 0)), float(np.mean(c) / box.size)


# ---------------------------------------------------------------------------
# Lifschitz scan


def lifschitz_box_side(rho, alpha, d):
    """Odd side ``[4 ceil(rho^(-alpha/2))]_o`` tying box size to ``rho^alpha``."""
    side = 4 * math.ceil(rho ** (-alpha / 2) - 1e-9)
    return side + 1 if side % 2 == 0 else side


@dataclass(frozen=True)
class TailPoint:
    rho: float
    energy: float
    estimate: float
    ci: float
    upper_bound_only: bool
    replicas: int
    box_side: int
    sites: int
    hits: int

    @property
    def low(self):
        return 0.0 if self.upper_bound_only else max(0.0, self.estimate - self.ci)

    @property
    def high(self):
        return self.estimate if self.upper_bound_only else self.estimate + self.ci


@dataclass(frozen=True)
class TailFit:
    alpha: float
    points: list
    slope: float
    intercept: float
    r2: float
    n_fit: int
    decreasing: bool
    ci_separated: bool
    superpolynomial: bool
    below_threshold: bool

    @property
    def rhos(self):
        return [p.rho for p in self.points]

    @property
    def estimates(self):
        return [p.estimate for p in self.points]


def lifschitz_scan(kernel, spec, rhos, alpha, total_sites=10**6, replicas=None,
                   box_side=None, seed=0, threads=None):
    """Estimate ``N(rho^alpha)`` over a grid of densities.

    ``spec`` is a :class:`DisorderSpec` template (re-parametrized with
    ``with_rho``) or a callable ``rho -> DisorderSpec``. A density with no
    observed eigenvalue reports the rule-of-three bound ``3 / (R |box|)``.

    The returned fit regresses ``ln(-ln N)`` on ``ln(1/rho)`` over points
    with a positive estimate. ``superpolynomial`` states that
    ``-ln N / ln(1/rho)`` increases as ``rho`` decreases, i.e. the decay beats
    every fixed power of ``rho`` over the probed range.
    """
    d = kernel.dimension
    threshold = 2 * (d + 1) / d
    below = alpha <= threshold
    if below:
        warnings.warn(f"alpha={alpha} <= 2(d+1)/d={threshold}: contrast run outside the tail regime")
    make = spec if callable(spec) and not hasattr(spec, "with_rho") else spec.with_rho
    rhos = sorted((float(r) for r in rhos), reverse=True)
    points = []
    for rho in rhos:
        e = rho ** alpha
        side = box_side or lifschitz_box_side(rho, alpha, d)
        box = Box.centered(d, (side - 1) // 2)
        reps = replicas or math.ceil(total_sites / box.size)
        c = replica_counts(kernel, make(rho), box, [e], reps, seed, threads)[:, 0]
        frac = c / box.size
        hits = int(c.sum())
        if hits == 0:
            points.append(TailPoint(rho, e, 3.0 / (reps * box.size), 0.0, True, reps, side,
                                    reps * box.size, 0))
        else:
            m, ci = mean_ci(frac)
            points.append(TailPoint(rho, e, float(m), float(ci), False, reps, side,
                                    reps * box.size, hits))
    return summarize_tail(points, alpha, below)


def summarize_tail(points, alpha, below_threshold=False):
    """Fit and trend diagnostics for tail points ordered by decreasing ``rho``."""
    good = [p for p in points if not p.upper_bound_only and 0 < p.estimate < 1]
    if len(good) >= 2:
        fit = line_fit([math.log(1 / p.rho) for p in good],
                       [math.log(-math.log(p.estimate)) for p in good])
        slope, icpt, r2 = fit.slope, fit.intercept, fit.r2
    else:
        slope = icpt = r2 = float("nan")
    est = [p.estimate for p in points]
    decreasing = all(b < a for a, b in zip(est, est[1:]))
    separated = all(q.high < p.low for p, q in zip(points, points[1:]))
    separated = separated and not any(p.upper_bound_only for p in points[:-1])
    # a rule-of-three bound still bounds -ln N from below, so it may enter
    ratios = [-math.log(p.estimate) / math.log(1 / p.rho) for p in points
              if 0 < p.estimate < 1 and p.rho < 1]
    superpoly = len(ratios) >= 2 and all(b > a for a, b in zip(ratios, ratios[1:]))
    return TailFit(alpha, points, slope, icpt, r2, len(good), decreasing, separated,
                   superpoly, below_threshold)
