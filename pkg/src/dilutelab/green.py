"""Green's functions of box restrictions and fractional-moment diagnostics."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._parallel import chunks, ordered_map
from ._rng import replica_rng
from ._stats import line_fit, mean_ci
from .errors import DivergenceError, PreconditionError, SingularityError, ValidationError
from .lattice import Box, assemble_dirichlet

RESIDUAL_TOL = 1e-10
SUM_TRUNCATION = 1e-14
MAX_SHELLS = 100_000


def delta_rate(rho, alpha, energy):
    """Reference rate ``sqrt(rho^alpha - E)``; requires ``E <= rho^alpha``."""
    top = rho ** alpha
    if energy > top:
        raise ValidationError(f"E={energy} above rho^alpha={top}")
    return math.sqrt(top - energy)


# ---------------------------------------------------------------------------
# solvers


class _ShiftedSolver:
    """Solves ``(H_box + V - z) x = delta_m``; banded in d = 1, dense otherwise."""

    def __init__(self, kernel, box):
        self.kernel, self.box = kernel, box
        self.banded = kernel.dimension == 1
        if self.banded:
            r = kernel.radius
            n = box.size
            self.r = r
            ab = np.zeros((2 * r + 1, n), dtype=complex)
            for k in range(-r, r + 1):
                # ab[r + i - j, j] = M[i, j] = h_{i-j}
                ab[r + k] = kernel[k]
            for k in range(1, r + 1):
                ab[r + k, n - k:] = 0
                ab[r - k, :k] = 0
            self.ab = ab
        else:
            self.base = assemble_dirichlet(kernel, box).matrix.astype(complex)

    def matrix(self, v, z):
        if self.banded:
            n = self.box.size
            m = np.zeros((n, n), dtype=complex)
            for k in range(-self.r, self.r + 1):
                i = np.arange(max(0, k), min(n, n + k))
                m[i, i - k] = self.ab[self.r + k, i - k]
        else:
            m = self.base.copy()
        m[np.diag_indices(len(m))] += np.ravel(v) - z
        return m

    def _matvec(self, ab, x):
        n = len(x)
        y = np.zeros(n, dtype=complex)
        for k in range(-self.r, self.r + 1):
            i = np.arange(max(0, k), min(n, n + k))
            y[i] += ab[self.r + k, i - k] * x[i - k]
        return y

    def column(self, v, z, source):
        n = self.box.size
        b = np.zeros(n, dtype=complex)
        b[source] = 1.0
        if self.banded:
            ab = self.ab.copy()
            ab[self.r] = ab[self.r] + np.ravel(v) - z
            x = linalg.solve_banded((self.r, self.r), ab, b, check_finite=False)
            res = self._matvec(ab, x) - b
            scale = np.abs(ab).sum(axis=0).max()
        else:
            a = self.base.copy()
            a[np.diag_indices(n)] += np.ravel(v) - z
            x = linalg.solve(a, b, check_finite=False)
            res = a @ x - b
            scale = np.abs(a).sum(axis=0).max()
        rel = np.linalg.norm(res) / (scale * np.linalg.norm(x) + 1.0)
        if not np.isfinite(rel) or rel > RESIDUAL_TOL:
            raise SingularityError(f"resolvent solve residual {rel:.2e} exceeds {RESIDUAL_TOL}")
        return x


def _spectral_gap(solver, v, energy):
    lam = np.linalg.eigvalsh(solver.matrix(v, 0.0))
    return float(np.min(np.abs(lam - energy)))


# ---------------------------------------------------------------------------
# queries


@dataclass(frozen=True, eq=False)
class GreenQuery:
    """One Green's function entry ``<delta_n, (H - E - i eps)^-1 delta_m>``."""

    box: Box
    kernel: object
    spec: object
    energy: float
    eps: float
    m: tuple
    n: tuple
    s: float = 0.5
    override: bool = False

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValidationError("fractional exponent s must lie in (0, 1)")
        holder = getattr(self.spec, "holder", None)
        if holder is not None and not self.override and not self.s < holder[0] / 4:
            raise ValidationError(f"s={self.s} must be below tau/4={holder[0] / 4} (set override)")
        for site in (self.m, self.n):
            if not self.box.contains(site):
                raise ValidationError(f"site {site} outside the box")

    @property
    def z(self):
        return complex(self.energy, self.eps)


def green(query, potential, gap_tol=1e-8):
    """Evaluate the queried entry for one potential realization.

    With ``eps = 0`` the energy must be separated from every eigenvalue by
    ``gap_tol``; otherwise :class:`SingularityError` carries the gap.
    """
    solver = _ShiftedSolver(query.kernel, query.box)
    v = np.asarray(potential.values if hasattr(potential, "values") else potential, dtype=float)
    if query.eps == 0 and query.energy >= 0:
        gap = _spectral_gap(solver, v, query.energy)
        if gap < gap_tol:
            raise SingularityError(f"E={query.energy} within {gap:.2e} of an eigenvalue", gap=gap)
    col = solver.column(v, query.z, query.box.index(query.m))
    return complex(col[query.box.index(query.n)])


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    ci: float
    replicas: int
    ratio: float  # mean * rho^s, traces the C_s rho^-s a-priori bound


def _replica_columns(kernel, spec, box, z, source, replicas, seed, threads, certify=False):
    solver = _ShiftedSolver(kernel, box)

    def task(idx):
        cols = []
        for r in idx:
            v = spec.sample(replica_rng(seed, r, 2), box.shape)
            if certify:
                gap = _spectral_gap(solver, v, z.real)
                if gap < 1e-8:
                    raise SingularityError(f"replica {r}: E within {gap:.2e} of an eigenvalue", gap=gap)
            cols.append(solver.column(v, z, source))
        return cols

    parts = ordered_map(task, chunks(replicas, 64), threads)
    return np.array([c for p in parts for c in p])


def fractional_moment(query, replicas, seed, threads=None):
    """Monte Carlo mean of ``|G_{mn}|^s`` with a normal CI."""
    certify = query.eps == 0 and query.energy >= 0
    cols = _replica_columns(query.kernel, query.spec, query.box, query.z, query.box.index(query.m),
                            replicas, seed, threads, certify)
    vals = np.abs(cols[:, query.box.index(query.n)]) ** query.s
    mean, ci = mean_ci(vals)
    rho = query.spec.rho
    ratio = float(mean * rho ** query.s) if rho > 0 else float("nan")
    return MomentEstimate(float(mean), float(ci), replicas, ratio)


@dataclass(frozen=True)
class MomentProfile:
    distances: np.ndarray
    mean: np.ndarray
    ci: np.ndarray
    eps: float
    s: float
    per_replica: np.ndarray = field(repr=False, default=None)


def moment_profile(kernel, spec, box, energy, eps, s, distances, replicas, seed, threads=None):
    """``E|G_{0 n}|^s`` for the box center ``0`` and ``n = dist * e_1``.

    Realizations depend only on ``seed``, so profiles at different ``eps``
    share their random numbers.
    """
    d = kernel.dimension
    distances = np.asarray(distances, dtype=int)
    if np.any(np.abs(distances) > box.half_side):
        raise ValidationError("distances exceed the box half-side")
    certify = eps == 0 and energy >= 0
    cols = _replica_columns(kernel, spec, box, complex(energy, eps), box.index(box.center),
                            replicas, seed, threads, certify)
    targets = [box.index(tuple(np.asarray(box.center) + np.eye(d, dtype=int)[0] * r)) for r in distances]
    vals = np.abs(cols[:, targets]) ** s
    mean, ci = mean_ci(vals, axis=0)
    return MomentProfile(distances, mean, ci, eps, s, vals)


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    distances: np.ndarray
    estimates: np.ndarray
    ci: np.ndarray
    used: np.ndarray
    slope: float
    intercept: float
    r2: float
    slope_stderr: float
    reference_rate: float
    calibration: float  # C with rate = reference / C, or a = rate / reference

    @property
    def rate(self):
        return -self.slope


def fit_profile(distances, est, ci, min_points=4):
    """Log-linear fit over distances whose CI excludes 0; fewer than ``min_points`` is refused."""
    distances = np.asarray(distances, dtype=float)
    est = np.asarray(est, dtype=float)
    ci = np.nan_to_num(np.asarray(ci, dtype=float), nan=0.0)
    used = (est - ci) > 0
    if used.sum() < min_points:
        raise PreconditionError(f"only {int(used.sum())} distances with CI excluding 0; need {min_points}")
    fit = line_fit(distances[used], np.log(est[used]))
    return fit, used


def default_box(kernel, distances, margin=2.0):
    r = int(np.max(np.abs(distances)))
    return Box.centered(kernel.dimension, max(1, int(math.ceil(margin * r)) + kernel.radius))


def combes_thomas_check(kernel, spec, box, energy, distances, replicas, seed, threads=None):
    """Fit the decay rate of ``E|G_{0n}|`` below the spectrum at ``eps = 0``.

    The spectrum of a nonnegative operator starts at or above 0, so ``E < 0``
    is certified with gap ``-E``. For ``E >= 0`` the gap is the smallest
    realized ``lambda_min - E``, and a nonpositive gap is refused.
    The reported ``calibration`` is ``C = sqrt(gap) / rate``.
    """
    box = box or default_box(kernel, distances)
    if energy < 0:
        gap = -energy
    else:
        solver = _ShiftedSolver(kernel, box)
        gap = min(np.linalg.eigvalsh(solver.matrix(spec.sample(replica_rng(seed, r, 2), box.shape), 0))[0]
                  for r in range(replicas)) - energy
        if gap <= 0:
            raise PreconditionError(f"E={energy} is not below the realized spectrum (gap {gap:.3g})")
    prof = moment_profile(kernel, spec, box, energy, 0.0, 1.0, distances, replicas, seed, threads)
    fit, used = fit_profile(prof.distances, prof.mean, prof.ci)
    rate = -fit.slope
    calib = math.sqrt(gap) / rate if rate > 0 else float("inf")
    return DecayFit(prof.distances, prof.mean, prof.ci, used, fit.slope, fit.intercept, fit.r2,
                    fit.slope_stderr, math.sqrt(gap), calib)


def localization_length_fit(kernel, spec, energy, s, distances, replicas, seed, eps=1e-3,
                            alpha=None, box=None, threads=None):
    """Exponential fit of ``E|G_{0n}|^s`` against ``n``.

    With ``alpha`` given, ``reference_rate`` is ``delta(E) = sqrt(rho^alpha - E)``
    and ``calibration`` is ``a = rate / delta(E)``.
    """
    box = box or default_box(kernel, distances)
    prof = moment_profile(kernel, spec, box, energy, eps, s, distances, replicas, seed, threads)
    delta = delta_rate(spec.rho, alpha, energy) if alpha is not None else float("nan")
    fit, used = fit_profile(prof.distances, prof.mean, prof.ci)
    a = -fit.slope / delta if alpha is not None and delta > 0 else float("nan")
    return DecayFit(prof.distances, prof.mean, prof.ci, used, fit.slope, fit.intercept, fit.r2,
                    fit.slope_stderr, delta, a)


# ---------------------------------------------------------------------------
# finite-volume criterion


@dataclass(frozen=True)
class CriterionValue:
    value: float
    satisfied: bool
    prefactor: float
    raw_sum: float
    shells: int


def _norm1(x):
    return np.abs(x).sum(axis=-1)


def _shell(d, r):
    """Sites with sup-norm exactly ``r``."""
    ax = np.arange(-r, r + 1)
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return pts[np.abs(pts).max(axis=1) == r]


def fm_criterion_sum(L, d, moment, rho, s, delta, D, c, xi_degree=1):
    """``D L^{2d} Xi(rho^-s) sum_{m in C_L, n outside} e^{-c|m-n|} M(m,n) e^{delta|n|/D}``.

    ``moment(m, n)`` takes site arrays of shape ``(k, d)`` and returns ``k``
    values. Distances use the l1 norm. The outer sum runs over sup-norm
    shells and stops once a shell adds less than ``1e-14`` of the total.
    """
    for name, val in (("D", D), ("c", c), ("rho", rho)):
        if not val > 0:
            raise ValidationError(f"{name} must be positive")
    if xi_degree < 0:
        raise ValidationError("Xi degree must be nonnegative")
    if c <= delta / D:
        raise DivergenceError(f"c={c} <= delta/D={delta / D}: the outer sum does not converge")
    inner = _shell_points_box(d, L)
    total = 0.0
    r = L + 1
    shells = 0
    while True:
        outer = _shell(d, r)
        mm = np.repeat(inner, len(outer), axis=0)
        nn = np.tile(outer, (len(inner), 1))
        vals = np.exp(-c * _norm1(mm - nn) + delta * _norm1(nn) / D) * np.asarray(moment(mm, nn), float)
        part = float(vals.sum())
        total += part
        shells += 1
        if part <= SUM_TRUNCATION * total or (total == 0 and part == 0):
            break
        if shells > MAX_SHELLS:
            raise DivergenceError("outer sum failed to converge within the shell budget")
        r += 1
    pref = D * L ** (2 * d) * (rho ** (-s)) ** xi_degree
    value = pref * total
    return CriterionValue(value, value < 1, pref, total, shells)


def _shell_points_box(d, L):
    ax = np.arange(-L, L + 1)
    return np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)


@dataclass(frozen=True)
class DistanceModel:
    """``E|G|^s`` as a function of ``|m-n|``: measured, then log-linear beyond."""

    distances: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float

    def __call__(self, m, n):
        r = _norm1(np.asarray(m) - np.asarray(n))
        out = np.exp(self.intercept + self.slope * r)
        inside = r <= self.distances[-1]
        out[inside] = np.interp(r[inside], self.distances, self.values)
        return out


def fm_criterion_lhs(kernel, spec, L, energy, s, delta, D, c, xi_degree=1, eps=1e-3,
                     replicas=200, seed=0, max_distance=None, threads=None):
    """Criterion sum with Monte Carlo moments fitted as a function of distance."""
    rmax = max_distance or 4 * L + 8
    dist = np.arange(0, rmax + 1)
    box = default_box(kernel, dist, margin=1.5)
    prof = moment_profile(kernel, spec, box, energy, eps, s, dist, replicas, seed, threads)
    pos = prof.mean > 0
    fit = line_fit(dist[pos][1:], np.log(prof.mean[pos][1:]))
    model = DistanceModel(dist, prof.mean, min(fit.slope, 0.0), fit.intercept)
    return fm_criterion_sum(L, kernel.dimension, model, spec.rho, s, delta, D, c, xi_degree)
