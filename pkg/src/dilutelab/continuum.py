"""Finite-difference continuum models: Bernoulli- and Poisson-Anderson Hamiltonians."""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ._parallel import chunks, ordered_map
from ._rng import replica_rng
from ._stats import mean_ci
from .disorder import DisorderSpec
from .errors import ResolutionError, ValidationError
from .lattice import FiniteOperator, check_capacity
from .spectra import TailPoint, count_below, lifschitz_box_side, sturm_counts, summarize_tail

DENSE_LIMIT = 2500


# ---------------------------------------------------------------------------
# single-site potentials


class SingleSitePotential:
    """Compactly supported bump ``u`` with box bounds.

    ``u_- 1[cube(tau_-)] <= u <= u_+ 1[cube(tau_+)]`` where ``cube(t)`` is the
    cube of edge ``2t + 1`` centered at 0. ``validate=False`` admits profiles
    outside these bounds (e.g. an exactly cell-filling bump); ``hb_ok`` then
    records whether they hold.
    """

    def __init__(self, profile, u_minus, u_plus, tau_minus, tau_plus, name="custom", validate=True):
        self.profile = profile
        self.u_minus, self.u_plus = float(u_minus), float(u_plus)
        self.tau_minus, self.tau_plus = float(tau_minus), float(tau_plus)
        self.name = name
        self.hb_ok = 0 < self.tau_minus < self.tau_plus and 0 < self.u_minus < self.u_plus
        if validate and not self.hb_ok:
            raise ValidationError("need 0 < tau_- < tau_+ and 0 < u_- < u_+")

    def __repr__(self):
        return f"SingleSitePotential({self.name}, u=({self.u_minus}, {self.u_plus}), tau=({self.tau_minus}, {self.tau_plus}))"

    @property
    def reach(self):
        """Sup-norm radius containing the support."""
        return self.tau_plus + 0.5

    def __call__(self, x):
        return self.profile(np.asarray(x, dtype=float))

    def check_bounds(self, x):
        """Pointwise bound check on sample points ``x`` of shape ``(k, d)``."""
        x = np.asarray(x, dtype=float)
        u = self(x)
        inner = np.all((x > -self.tau_minus - 0.5) & (x <= self.tau_minus + 0.5), axis=-1)
        outer = np.all((x > -self.tau_plus - 0.5) & (x <= self.tau_plus + 0.5), axis=-1)
        return bool(np.all(u >= self.u_minus * inner - 1e-12) and np.all(u <= self.u_plus * outer + 1e-12))

    def to_dict(self):
        return {"name": self.name, **getattr(self, "meta", {})}


def box_bump(u0=1.0, half_width=1.0):
    """``u0`` on the cube ``[-w, w]^d``."""
    w = float(half_width)

    def profile(x):
        return u0 * np.all(np.abs(x) <= w, axis=-1).astype(float)

    tau_m = w - 0.5
    ssp = SingleSitePotential(profile, u0 / 2, u0, tau_m, w, "box", validate=tau_m > 0)
    ssp.meta = {"u0": u0, "half_width": w}
    return ssp


def cell_filling(u0=1.0):
    """``u0`` on the unit cell ``(-1/2, 1/2]^d``; translates tile space exactly."""
    def profile(x):
        return u0 * np.all((x > -0.5) & (x <= 0.5), axis=-1).astype(float)

    ssp = SingleSitePotential(profile, u0, u0, 0.0, 0.0, "cell", validate=False)
    ssp.meta = {"u0": u0}
    return ssp


def radial_bump(u0=1.0, radius=1.5, d=1):
    """Smooth radial bump ``u0 exp(1 - 1/(1 - (r/R)^2))``."""
    R = float(radius)

    def profile(x):
        r2 = np.sum(x * x, axis=-1) / R ** 2
        out = np.zeros_like(r2)
        inside = r2 < 1
        out[inside] = u0 * np.exp(1 - 1 / (1 - r2[inside]))
        return out

    half = R / (2 * math.sqrt(d))  # inner cube fits in the ball of radius R/2
    u_minus = u0 * math.exp(1 - 1 / (1 - 0.25))
    ssp = SingleSitePotential(profile, u_minus, u0, half - 0.5, R, "radial")
    ssp.meta = {"u0": u0, "radius": R, "d": d}
    return ssp


BUMPS = {"box": box_bump, "cell": cell_filling, "radial": radial_bump}


# ---------------------------------------------------------------------------
# backgrounds and models


@dataclass(frozen=True)
class PeriodicBackground:
    """``q Z^d``-periodic background; ``kind`` is ``zero`` or ``cosine``."""

    q: int = 3
    kind: str = "zero"
    amplitude: float = 0.0

    def __post_init__(self):
        if self.q < 3 or self.q % 2 == 0:
            raise ValidationError("period q must be an odd integer > 1")
        if self.kind not in ("zero", "cosine"):
            raise ValidationError("background kind must be 'zero' or 'cosine'")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros(x.shape[:-1])
        return self.amplitude * np.sum(1 - np.cos(2 * np.pi * x / self.q), axis=-1)


MODES = ("none", "bernoulli", "poisson")


@dataclass(frozen=True, eq=False)
class ContinuumModel:
    """``-Laplacian + V_per + V_omega`` on the box ``[-l/2, l/2]^d``.

    ``mesh`` must divide the unit cell and ``length``. ``spec`` gives the
    site law for the Bernoulli mode (default ``Bernoulli(rho)``).
    """

    d: int
    length: float
    mesh: float
    mode: str = "none"
    rho: float = 0.0
    bump: SingleSitePotential = None
    background: PeriodicBackground = field(default_factory=PeriodicBackground)
    spec: DisorderSpec = None
    check_support: bool = True

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValidationError("continuum models support d <= 3")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        per_cell = 1 / self.mesh
        if abs(per_cell - round(per_cell)) > 1e-9 or abs(self.length / self.mesh - round(self.length / self.mesh)) > 1e-9:
            raise ValidationError("mesh must divide both the unit cell and the box length")
        if self.mode != "none" and self.bump is None:
            object.__setattr__(self, "bump", box_bump(1.0, 1.0))
        if self.mode == "bernoulli" and self.spec is None:
            object.__setattr__(self, "spec", DisorderSpec.bernoulli(self.rho))
        if self.mode == "bernoulli" and self.check_support:
            lo, hi = 0.0, self.spec.omega_plus
            if not (lo == 0 and hi <= 1):
                raise ValidationError("site law must live in [0, 1] (disable with check_support=False)")
        if self.mode == "poisson" and not self.rho > 0:
            raise ValidationError("Poisson density must be positive")
        if self.bump is not None and self.bump.tau_minus > 0:
            across = (2 * self.bump.tau_minus + 1) / self.mesh
            if across < 4:
                raise ResolutionError(f"mesh {self.mesh} puts {across:.1f} < 4 points across the bump core")

    @property
    def points_per_side(self):
        return int(round(self.length / self.mesh)) - 1

    @property
    def size(self):
        return self.points_per_side ** self.d

    @property
    def volume(self):
        return self.length ** self.d

    def grid(self):
        """Interior grid points, shape ``(size, d)``, lexicographic."""
        ax = -self.length / 2 + self.mesh * np.arange(1, self.points_per_side + 1)
        g = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in g], axis=-1)

    def axis(self):
        return -self.length / 2 + self.mesh * np.arange(1, self.points_per_side + 1)

    def with_rho(self, rho, length=None):
        spec = self.spec.with_rho(rho) if self.spec is not None else None
        return ContinuumModel(self.d, length or self.length, self.mesh, self.mode, rho, self.bump,
                              self.background, spec, self.check_support)


# ---------------------------------------------------------------------------
# Poisson clouds


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    density: float
    lo: np.ndarray
    hi: np.ndarray
    seed: int = None

    @property
    def count(self):
        return len(self.points)

    @property
    def volume(self):
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def count_in(self, lo, hi):
        p = self.points
        return int(np.sum(np.all((p >= lo) & (p < hi), axis=1)))


def sample_poisson_cloud(rho, lo, hi, seed, replica=0):
    """Poisson(``rho |B|``) many uniform points in the box ``[lo, hi)``."""
    if not rho >= 0:
        raise ValidationError("density must be nonnegative")
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    rng = replica_rng(seed, replica, 4)
    vol = float(np.prod(hi - lo))
    k = rng.poisson(rho * vol) if rho * vol > 0 else 0
    pts = lo + (hi - lo) * rng.random((k, len(lo)))
    return PointCloud(pts, rho, lo, hi, seed)


def thin_cloud(cloud, p, seed):
    """Split by independent ``p``-coins into (kept, dropped) clouds."""
    rng = replica_rng(seed, 0, 5)
    keep = rng.random(cloud.count) < p
    return (PointCloud(cloud.points[keep], cloud.density * p, cloud.lo, cloud.hi, seed),
            PointCloud(cloud.points[~keep], cloud.density * (1 - p), cloud.lo, cloud.hi, seed))


# ---------------------------------------------------------------------------
# assembly


def _add_bump(values, model, center, weight=1.0):
    """Add ``weight * u(x - center)`` on the grid patch within the bump's reach."""
    ax = model.axis()
    r = model.bump.reach
    sl = []
    for c in center:
        i0 = np.searchsorted(ax, c - r, side="left")
        i1 = np.searchsorted(ax, c + r, side="right")
        if i1 <= i0:
            return
        sl.append(slice(i0, i1))
    sub = np.meshgrid(*[ax[s] for s in sl], indexing="ij")
    x = np.stack(sub, axis=-1) - np.asarray(center)
    values[tuple(sl)] += weight * model.bump(x)


def random_potential(model, seed, replica=0):
    """Grid values of ``V_per + V_omega`` for one realization, shape ``(n,)*d``."""
    n = model.points_per_side
    d = model.d
    vals = model.background(model.grid()).reshape((n,) * d)
    if model.mode == "none":
        return vals
    reach = model.bump.reach
    half = model.length / 2 + reach
    if model.mode == "bernoulli":
        m = int(math.floor(half))
        sites = np.stack(np.meshgrid(*([np.arange(-m, m + 1)] * d), indexing="ij"), -1).reshape(-1, d)
        w = model.spec.sample(replica_rng(seed, replica, 6), (len(sites),))
        for j, wj in zip(sites, w):
            if wj != 0:
                _add_bump(vals, model, j, wj)
        return vals
    cloud = sample_poisson_cloud(model.rho, [-half] * d, [half] * d, seed, replica)
    return potential_from_cloud(model, cloud, vals)


def potential_from_cloud(model, cloud, base=None):
    n = model.points_per_side
    vals = np.zeros((n,) * model.d) if base is None else base.copy()
    for p in cloud.points:
        _add_bump(vals, model, p)
    return vals


def laplacian_fd(model):
    """Sparse ``(2d+1)``-point Dirichlet negative Laplacian scaled by ``h^-2``."""
    n = model.points_per_side
    h2 = model.mesh ** 2
    one = sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h2
    eye = sparse.identity(n)
    lap = sparse.csr_matrix((n ** model.d, n ** model.d))
    for ax in range(model.d):
        term = None
        for b in range(model.d):
            f = one if b == ax else eye
            term = f if term is None else sparse.kron(term, f)
        lap = lap + term
    return lap.tocsr()


def assemble_continuum(model, potential=None, memory_budget=None):
    """Dense FD operator ``-Laplacian_h + V`` on the interior grid."""
    n = model.size
    check_capacity(n, 8, memory_budget)
    m = laplacian_fd(model).toarray()
    if potential is not None:
        m[np.diag_indices(n)] += np.ravel(potential)
    return FiniteOperator(m, "position", ("continuum", model.d, model.length, model.mesh),
                          {"kind": "continuum"})


def ground_state(model, potential=None):
    if model.d == 1:
        from scipy.linalg import eigvalsh_tridiagonal
        n = model.points_per_side
        h2 = model.mesh ** 2
        diag = 2 / h2 + (np.zeros(n) if potential is None else np.ravel(potential))
        return float(eigvalsh_tridiagonal(diag, -np.ones(n - 1) / h2, select="i", select_range=(0, 0))[0])
    return float(np.linalg.eigvalsh(assemble_continuum(model, potential).matrix)[0])


def assemble_bloch_cell(model, theta, potential=None):
    """Periodic cell ``[0, q)^d`` with twisted wraparound ``psi(x + q e_i) = e^{i theta_i} psi(x)``."""
    q = model.background.q
    n = int(round(q / model.mesh))
    d = model.d
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (d,))
    h2 = model.mesh ** 2
    eye = sparse.identity(n)
    total = sparse.csr_matrix((n ** d, n ** d), dtype=complex)
    for ax in range(d):
        one = sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], dtype=complex).tolil()
        ph = np.exp(1j * theta[ax])
        one[n - 1, 0] += -ph
        one[0, n - 1] += -np.conj(ph)
        term = None
        for b in range(d):
            f = one.tocsr() if b == ax else eye
            term = f if term is None else sparse.kron(term, f)
        total = total + term / h2
    m = total.toarray()
    ax = model.mesh * np.arange(n)
    g = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    v = model.background(g)
    if potential is not None:
        v = v + np.ravel(potential)
    m[np.diag_indices(n ** d)] += v
    return FiniteOperator(m, "bloch", ("cell", q, tuple(theta)), {"kind": "bloch"})


@dataclass(frozen=True)
class BandEdge:
    thetas: np.ndarray
    lowest: np.ndarray
    gap_at_bottom: float
    curvature: float

    @property
    def simple_nondegenerate(self):
        return self.gap_at_bottom > 0 and self.curvature > 0


def bloch_band_edge(model, n_theta=9, step=1e-2):
    """Lowest Bloch band along the first axis and its bottom diagnostics."""
    d = model.d
    ths = np.linspace(-np.pi, np.pi, n_theta)
    low = np.array([np.linalg.eigvalsh(assemble_bloch_cell(model, [t] + [0] * (d - 1)).matrix)[0] for t in ths])
    lam0 = np.linalg.eigvalsh(assemble_bloch_cell(model, [0] * d).matrix)
    curv = []
    for ax in range(d):
        e = np.zeros(d)
        e[ax] = step
        lp = np.linalg.eigvalsh(assemble_bloch_cell(model, e).matrix)[0]
        lm = np.linalg.eigvalsh(assemble_bloch_cell(model, -e).matrix)[0]
        curv.append((lp + lm - 2 * lam0[0]) / step ** 2)
    return BandEdge(ths, low, float(lam0[1] - lam0[0]), float(min(curv)))


# ---------------------------------------------------------------------------
# IDS


@dataclass(frozen=True, eq=False)
class ContinuumIds:
    energies: np.ndarray
    values: np.ndarray
    ci: np.ndarray
    replicas: int
    volume: float
    seed: int
    per_replica: np.ndarray = field(repr=False, default=None)


def _counts(model, potentials, energies):
    if model.d == 1:
        h2 = model.mesh ** 2
        n = model.points_per_side
        diag = 2 / h2 + potentials.reshape(len(potentials), -1)
        return sturm_counts(diag, np.full(n - 1, 1 / h2 ** 2), np.nextafter(energies, np.inf))
    base = assemble_continuum(model)
    out = np.empty((len(potentials), len(energies)), dtype=np.int64)
    for i, v in enumerate(potentials):
        op = base.with_potential(v)
        if op.size <= DENSE_LIMIT:
            out[i] = np.searchsorted(np.linalg.eigvalsh(op.matrix), energies, side="right")
        else:
            out[i] = [count_below(op, e, method="inertia") for e in energies]
    return out


def continuum_counts(model, energies, replicas, seed, threads=None, chunk=64):
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if replicas == 0:
        return np.zeros((0, len(energies)), dtype=np.int64)

    def task(idx):
        pots = np.stack([random_potential(model, seed, r) for r in idx])
        return _counts(model, pots, energies)

    return np.concatenate(ordered_map(task, chunks(replicas, chunk), threads))


def continuum_ids(model, energies, replicas, seed, threads=None):
    """Replica mean of ``count_below / |box volume|``."""
    if replicas < 1:
        raise ValidationError("replicas must be at least 1")
    energies = np.sort(np.atleast_1d(np.asarray(energies, dtype=float)))
    frac = continuum_counts(model, energies, replicas, seed, threads) / model.volume
    mean, ci = mean_ci(frac, axis=0)
    return ContinuumIds(energies, mean, ci, replicas, model.volume, int(seed), frac)


def continuum_lifschitz_scan(model, rhos, alpha, total_volume=1e5, replicas=None, seed=0,
                             threads=None):
    """Lifschitz diagnostic for the continuum: ``N(rho^alpha)`` over ``rhos``.

    Box length per density follows the lattice rule ``[4 ceil(rho^(-alpha/2))]_o``.
    """
    d = model.d
    thr = 2 * (d + 1) / d
    if alpha <= thr:
        warnings.warn(f"alpha={alpha} <= 2(d+1)/d={thr}: contrast run outside the tail regime")
    points = []
    for rho in sorted((float(r) for r in rhos), reverse=True):
        e = rho ** alpha
        side = lifschitz_box_side(rho, alpha, d)
        m = model.with_rho(rho, length=float(side))
        reps = replicas or max(2, math.ceil(total_volume / m.volume))
        c = continuum_counts(m, [e], reps, seed, threads)[:, 0]
        hits = int(c.sum())
        if hits == 0:
            points.append(TailPoint(rho, e, 3.0 / (reps * m.volume), 0.0, True, reps, side,
                                    int(reps * m.volume), 0))
        else:
            mean, ci = mean_ci(c / m.volume)
            points.append(TailPoint(rho, e, float(mean), float(ci), False, reps, side,
                                    int(reps * m.volume), hits))
    return summarize_tail(points, alpha, alpha <= thr)
