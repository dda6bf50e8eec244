"""Translation-invariant hopping kernels on Z^d and their box restrictions.

A kernel is a finite map ``offset -> amplitude``; the operator acts as
``(H u)_x = sum_y h_{x-y} u_y`` and its symbol is
``h(theta) = sum_k h_k exp(i k.theta)``.
"""
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import CapacityError, DegeneracyError, SymmetryError, ValidationError

DEFAULT_MEMORY_BUDGET = 512 * 2**20  # bytes for one dense operator


class HoppingKernel:
    """Finitely supported Hermitian hopping kernel.

    Parameters
    ----------
    coefficients : dict
        Mapping from an integer offset (tuple of length ``d``) to a complex
        amplitude. Offsets missing from the map are zero.
    decay : float, optional
        Constant ``c`` of the certificate ``|h_k| <= exp(-c|k|)/c``. When
        omitted the largest certifiable ``c`` is computed.
    normalize : bool
        Shift ``h_0`` so that ``min h = 0``. The subtracted value is kept in
        :attr:`energy_shift`.
    validate : bool
        Check Hermitian symmetry, non-triviality and the decay certificate.
    """

    def __init__(self, coefficients, decay=None, *, normalize=True, validate=True):
        if not coefficients:
            raise ValidationError("kernel has no coefficients")
        items = {}
        dims = set()
        for k, v in coefficients.items():
            k = (int(k),) if np.isscalar(k) else tuple(int(x) for x in k)
            dims.add(len(k))
            items[k] = items.get(k, 0) + complex(v)
        if len(dims) != 1:
            raise ValidationError(f"inconsistent offset dimensions {sorted(dims)}")
        self.dimension = dims.pop()
        if self.dimension < 1:
            raise ValidationError("dimension must be positive")
        zero = (0,) * self.dimension
        items.setdefault(zero, 0j)
        self._coeffs = {k: v for k, v in items.items() if v != 0 or k == zero}
        if validate:
            self._check_hermitian()
            if not any(v != 0 for k, v in self._coeffs.items() if k != zero):
                raise ValidationError("kernel needs some h_k != 0 with k != 0")

        self._refresh()
        self.energy_shift = 0.0
        if normalize:
            shift = _symbol_min(self)[1]
            if abs(shift) < 1e-13 * max(1.0, self.l1_norm):
                shift = 0.0
            if shift != 0.0:
                self._coeffs[zero] = self._coeffs[zero] - shift
                self.energy_shift = float(shift)
        self._refresh()

        if decay is None:
            self.decay = self.max_certified_decay()
        else:
            self.decay = float(decay)
            if self.decay <= 0:
                raise ValidationError("decay constant must be positive")
            if validate:
                self._check_decay()

    # construction helpers -------------------------------------------------
    def _refresh(self):
        keys = sorted(self._coeffs)
        self.offsets = np.array(keys, dtype=int).reshape(len(keys), self.dimension)
        self.amplitudes = np.array([self._coeffs[k] for k in keys], dtype=complex)
        self.radius = int(np.abs(self.offsets).max())
        self.is_real = bool(np.all(self.amplitudes.imag == 0))

    def _check_hermitian(self):
        for k, v in self._coeffs.items():
            mk = tuple(-x for x in k)
            w = self._coeffs.get(mk, 0j)
            if abs(w - np.conj(v)) > 1e-14 * max(1.0, abs(v)):
                raise SymmetryError(f"h_{mk} = {w} is not conj(h_{k}) = {np.conj(v)}")

    def _check_decay(self):
        c = self.decay
        for k, v in self._coeffs.items():
            bound = np.exp(-c * np.linalg.norm(k)) / c
            if abs(v) > bound * (1 + 1e-12):
                raise ValidationError(f"|h_{k}| = {abs(v):.3g} exceeds exp(-c|k|)/c = {bound:.3g}")

    def max_certified_decay(self):
        """Largest ``c`` with ``|h_k| <= exp(-c|k|)/c`` for every stored ``k``."""
        best = np.inf
        for k, v in self._coeffs.items():
            a = abs(v)
            if a == 0:
                continue
            r = float(np.linalg.norm(k))
            g = lambda c: -c * r - np.log(c) - np.log(a)  # decreasing in c
            lo, hi = 1e-300, 1.0
            while g(hi) > 0:
                hi *= 2
            best = min(best, optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-13))
        return float(best)

    # accessors ------------------------------------------------------------
    @property
    def coefficients(self):
        return dict(self._coeffs)

    @property
    def l1_norm(self):
        return float(sum(abs(v) for v in self._coeffs.values()))

    def __getitem__(self, k):
        k = (int(k),) if np.isscalar(k) else tuple(int(x) for x in k)
        return self._coeffs.get(k, 0j)

    def __repr__(self):
        return (f"HoppingKernel(d={self.dimension}, terms={len(self._coeffs)}, "
                f"decay={self.decay:.4g}, shift={self.energy_shift:.4g})")

    # symbol ---------------------------------------------------------------
    def _phases(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.dimension == 1 and (theta.ndim == 0 or theta.shape[-1] != 1):
            theta = theta[..., None]
        if theta.shape[-1] != self.dimension:
            raise ValidationError(f"theta must have trailing dimension {self.dimension}")
        return theta, np.exp(1j * (theta @ self.offsets.T))

    def symbol_complex(self, theta):
        _, ph = self._phases(theta)
        return ph @ self.amplitudes

    def symbol(self, theta):
        """Real symbol ``h(theta)``; ``theta`` has shape ``(..., d)``."""
        return symbol_eval(self, theta)

    def gradient(self, theta):
        _, ph = self._phases(theta)
        return np.real((ph * self.amplitudes * 1j) @ self.offsets)

    def hessian(self, theta):
        _, ph = self._phases(theta)
        w = -(ph * self.amplitudes)
        return np.real(np.einsum("...t,ti,tj->...ij", w, self.offsets, self.offsets))

    # serialization --------------------------------------------------------
    def to_dict(self):
        return {
            "dimension": self.dimension,
            "decay": self.decay,
            "terms": [{"offset": list(k), "re": float(v.real), "im": float(v.imag)}
                      for k, v in sorted(self._coeffs.items())],
        }

    @classmethod
    def from_dict(cls, data, normalize=True):
        d = int(data["dimension"])
        coeffs = {}
        for t in data["terms"]:
            off = tuple(int(x) for x in t["offset"])
            if len(off) != d:
                raise ValidationError(f"offset {off} does not have dimension {d}")
            coeffs[off] = coeffs.get(off, 0) + complex(t.get("re", 0.0), t.get("im", 0.0))
        return cls(coeffs, data.get("decay"), normalize=data.get("normalize", normalize))


def laplacian(d=1):
    """Negative discrete Laplacian: ``h_0 = 2d``, ``h_{+-e_i} = -1``."""
    coeffs = {(0,) * d: 2.0 * d}
    for i in range(d):
        e = [0] * d
        e[i] = 1
        coeffs[tuple(e)] = -1.0
        e[i] = -1
        coeffs[tuple(e)] = -1.0
    return HoppingKernel(coeffs)


def load_kernel(path):
    with open(path) as fh:
        return HoppingKernel.from_dict(json.load(fh))


def save_kernel(kernel, path):
    Path(path).write_text(json.dumps(kernel.to_dict(), indent=2) + "\n")


def symbol_eval(kernel, theta):
    """Evaluate ``sum_k h_k exp(i k.theta)`` and return its real part.

    Raises :class:`SymmetryError` when the imaginary part exceeds
    ``1e-12 * sum |h_k|``.
    """
    z = kernel.symbol_complex(theta)
    if np.any(np.abs(np.imag(z)) > 1e-12 * kernel.l1_norm):
        raise SymmetryError("symbol has a non-negligible imaginary part; kernel is not Hermitian")
    return np.real(z)


# ---------------------------------------------------------------------------
# boxes and finite operators


@dataclass(frozen=True)
class Box:
    """Cube ``C_{center, L}`` of side ``2L+1`` in Z^d."""

    center: tuple
    half_side: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(int(c) for c in np.atleast_1d(self.center)))
        if self.half_side < 0:
            raise ValidationError("half_side must be nonnegative")
        object.__setattr__(self, "half_side", int(self.half_side))

    @classmethod
    def centered(cls, d, half_side):
        return cls((0,) * d, half_side)

    @property
    def dimension(self):
        return len(self.center)

    @property
    def side(self):
        return 2 * self.half_side + 1

    @property
    def shape(self):
        return (self.side,) * self.dimension

    @property
    def size(self):
        return self.side ** self.dimension

    def sites(self):
        """Site coordinates in lexicographic order, shape ``(size, d)``."""
        axes = [np.arange(c - self.half_side, c + self.half_side + 1) for c in self.center]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)

    def index(self, site):
        local = np.asarray(site) - np.asarray(self.center) + self.half_side
        if np.any(local < 0) or np.any(local >= self.side):
            raise ValidationError(f"site {tuple(site)} outside {self}")
        return int(np.ravel_multi_index(tuple(local), self.shape))

    def contains(self, site):
        return bool(np.all(np.abs(np.asarray(site) - np.asarray(self.center)) <= self.half_side))


@dataclass(frozen=True, eq=False)
class FiniteOperator:
    """Hermitian matrix with its basis tag and geometry."""

    matrix: np.ndarray
    basis: str = "position"
    geometry: object = None
    meta: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def bandwidth(self):
        m = self.matrix
        i, j = np.nonzero(m)
        return int(np.max(np.abs(i - j))) if len(i) else 0

    def with_potential(self, potential):
        """Return ``self + diag(potential)``."""
        v = np.asarray(potential, dtype=float).ravel()
        if v.size != self.size:
            raise ValidationError(f"potential of size {v.size} for operator of size {self.size}")
        m = self.matrix.copy()
        m[np.diag_indices(self.size)] += v
        return FiniteOperator(m, self.basis, self.geometry, dict(self.meta, potential=True))


def check_capacity(n, itemsize, memory_budget=None):
    budget = DEFAULT_MEMORY_BUDGET if memory_budget is None else memory_budget
    need = n * n * itemsize
    if need > budget:
        raise CapacityError(f"dense operator of size {n} needs {need} bytes > budget {budget}")


def assemble_dirichlet(kernel, box, memory_budget=None):
    """Dense matrix ``M[x, y] = h_{x-y}`` for ``x, y`` in ``box`` (plain truncation)."""
    if box.dimension != kernel.dimension:
        raise ValidationError("box and kernel dimensions differ")
    n = box.size
    dtype = float if kernel.is_real else complex
    check_capacity(n, np.dtype(dtype).itemsize, memory_budget)
    m = np.zeros((n, n), dtype=dtype)
    local = box.sites() - np.asarray(box.center) + box.half_side
    rows = np.arange(n)
    for k, amp in zip(kernel.offsets, kernel.amplitudes):
        tgt = local - k  # y = x - k
        ok = np.all((tgt >= 0) & (tgt < box.side), axis=1)
        cols = np.ravel_multi_index(tuple(tgt[ok].T), box.shape)
        m[rows[ok], cols] = amp.real if dtype is float else amp
    return FiniteOperator(m, "position", box, {"kind": "dirichlet"})


def kernel_bands(kernel):
    """For ``d = 1``: array ``b`` with ``M[i, i-k] = b[k]``, ``k = 0..R``."""
    if kernel.dimension != 1:
        raise ValidationError("band form only exists for d = 1")
    return np.array([kernel[k] for k in range(kernel.radius + 1)])


# ---------------------------------------------------------------------------
# symbol minima


@dataclass(frozen=True)
class SymbolMinima:
    points: list
    hessians: list
    quadratic_constant: float
    minimum_value: float


def _wrap(theta):
    """Map to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2 * np.pi)


def _torus_dist(a, b):
    diff = _wrap(np.asarray(a) - np.asarray(b))
    return np.linalg.norm(diff, axis=-1)


def _grid(d, resolution):
    ax = -np.pi + 2 * np.pi * np.arange(resolution) / resolution
    g = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack(g, axis=-1)


def _refine(kernel, theta0):
    th = np.atleast_1d(np.asarray(theta0, float))
    res = optimize.minimize(lambda t: float(kernel.symbol(t)), th,
                            jac=lambda t: kernel.gradient(t), method="BFGS",
                            options={"gtol": 1e-12})
    th = res.x
    for _ in range(3):  # Newton polish where the Hessian is definite
        hs = kernel.hessian(th)
        if np.linalg.eigvalsh(hs).min() <= 0:
            break
        th = th - np.linalg.solve(hs, kernel.gradient(th))
    th = _wrap(th)
    return th, float(kernel.symbol(th))


def _symbol_min(kernel, resolution=None):
    d = kernel.dimension
    resolution = resolution or max(8, {1: 128, 2: 48, 3: 16}.get(d, 8))
    pts = _grid(d, resolution).reshape(-1, d)
    vals = kernel.symbol(pts)
    best = None
    for i in np.argsort(vals)[: min(8, len(vals))]:
        th, v = _refine(kernel, pts[i])
        if best is None or v < best[1]:
            best = (th, v)
    return best


def _central_hessian(kernel, theta, step=1e-4):
    d = len(theta)
    hess = np.empty((d, d))
    eye = np.eye(d) * step
    f = lambda t: float(kernel.symbol(t))
    for i, j in itertools.product(range(d), repeat=2):
        hess[i, j] = (f(theta + eye[i] + eye[j]) - f(theta + eye[i] - eye[j])
                      - f(theta - eye[i] + eye[j]) + f(theta - eye[i] - eye[j])) / (4 * step**2)
    return 0.5 * (hess + hess.T)


def find_symbol_minima(kernel, resolution=64, tol=1e-6):
    """Locate the global minima of the symbol and their Hessians.

    Grid scan over ``resolution**d`` points, Newton-type refinement of every
    discrete local minimum, merge of candidates within 1.5 grid steps, and a
    central-difference Hessian at each survivor. Raises
    :class:`DegeneracyError` if a Hessian eigenvalue is below ``tol``.
    """
    d = kernel.dimension
    if resolution < 8:
        raise ValidationError("resolution must be at least 8 per dimension")
    grid = _grid(d, resolution)
    vals = kernel.symbol(grid)
    is_min = np.ones(vals.shape, dtype=bool)
    for shift in itertools.product((-1, 0, 1), repeat=d):
        if any(shift):
            is_min &= vals <= np.roll(vals, shift, axis=tuple(range(d)))
    cands = []
    for idx in zip(*np.nonzero(is_min)):
        cands.append(_refine(kernel, grid[idx]))
    hmin = min(v for _, v in cands)
    value_tol = max(tol, 1e-10) * max(1.0, kernel.l1_norm)
    spacing = 2 * np.pi / resolution
    merged = []
    for th, v in sorted(cands, key=lambda c: c[1]):
        if v > hmin + value_tol:
            continue
        if any(_torus_dist(th, m) < 1.5 * spacing for m in merged):
            continue
        merged.append(th)
    merged.sort(key=lambda t: tuple(np.round(t, 9)))
    hessians = []
    for th in merged:
        hs = _central_hessian(kernel, th)
        ev = np.linalg.eigvalsh(hs)
        if ev.min() < tol:
            raise DegeneracyError(f"minimum at {th} has Hessian eigenvalue {ev.min():.3g} < {tol}")
        hessians.append(hs)
    pts = grid.reshape(-1, d)
    dist = np.min(np.stack([_torus_dist(pts, m) for m in merged]), axis=0)
    keep = dist > 1e-9
    qc = float(np.min((kernel.symbol(pts[keep]) - hmin) / dist[keep] ** 2))
    return SymbolMinima([np.atleast_1d(m) for m in merged], hessians, qc, hmin)
