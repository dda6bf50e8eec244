"""Single-site laws for the random potential and their sampling.

Every law maps two uniforms per site ``(u_select, u_shape)`` to a value, in
lexicographic site order. Using the same uniforms for every law and density
gives a monotone coupling: for the Bernoulli-type laws a larger density
never lowers a site value.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from ._rng import replica_rng
from .errors import ValidationError
from .lattice import Box

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


# ---------------------------------------------------------------------------
# mollifiers


class Mollifier:
    """Nonnegative compactly supported density ``v`` with unit mass."""

    def __init__(self, name, pdf, support, cdf=None, ppf=None, log_mgf=None, sup=None,
                 mean=None, var=None):
        self.name = name
        self.support = (float(support[0]), float(support[1]))
        self._pdf = pdf
        if cdf is None:
            cdf, ppf = _tabulate(pdf, self.support)
        self._cdf, self._ppf = cdf, ppf
        self._log_mgf = log_mgf
        grid = np.linspace(*self.support, 4001)
        self.sup = float(np.max(pdf(grid))) if sup is None else float(sup)
        self.mean = mean if mean is not None else integrate.quad(lambda x: x * pdf(x), *self.support)[0]
        if var is None:
            var = integrate.quad(lambda x: (x - self.mean) ** 2 * pdf(x), *self.support)[0]
        self.var = var

    def __repr__(self):
        return f"Mollifier({self.name!r}, support={self.support})"

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        return np.where((x >= lo) & (x <= hi), self._pdf(np.clip(x, lo, hi)), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        return np.where(x <= lo, 0.0, np.where(x >= hi, 1.0, self._cdf(np.clip(x, lo, hi))))

    def ppf(self, u):
        return self._ppf(np.asarray(u, dtype=float))

    def log_mgf(self, s):
        """``log E[exp(s X)]`` for ``X ~ v``."""
        if self._log_mgf is not None:
            return self._log_mgf(np.asarray(s, dtype=float))
        return _numeric_log_mgf(self, s)

    def check(self, tol=1e-8):
        lo, hi = self.support
        if not lo < hi:
            raise ValidationError("mollifier support must be a nondegenerate interval")
        mass = integrate.quad(self._pdf, lo, hi, limit=200)[0]
        if abs(mass - 1) > tol:
            raise ValidationError(f"mollifier integrates to {mass}, not 1")
        if np.any(self._pdf(np.linspace(lo, hi, 2001)) < 0):
            raise ValidationError("mollifier takes negative values")


def _tabulate(pdf, support, n=20001):
    x = np.linspace(*support, n)
    y = pdf(x)
    c = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))])
    c /= c[-1]
    keep = np.concatenate([[True], np.diff(c) > 0])
    cdf = lambda t: np.interp(t, x, c)
    ppf = lambda u: np.interp(u, c[keep], x[keep])
    return cdf, ppf


def _numeric_log_mgf(moll, s):
    s = np.asarray(s, dtype=float)
    x = np.linspace(*moll.support, 4001)
    w = moll.pdf(x)
    flat = np.atleast_1d(s)
    out = np.empty(flat.shape)
    for i, si in enumerate(flat):
        e = si * x
        m = e.max()
        out[i] = m + np.log(_trapezoid(w * np.exp(e - m), x))
    return out.reshape(s.shape)


def _log_sinhc(z):
    """log(sinh(z)/z) for z >= 0, stable for large z."""
    z = np.abs(np.asarray(z, dtype=float))
    small = z < 1e-4
    zz = np.where(small, 1.0, z)
    big = zz - np.log(2 * zz) + np.log1p(-np.exp(-2 * zz))
    return np.where(small, z * z / 6, big)


def triangular():
    """Unit triangular bump on [-1, 1] with v(0) = 1."""
    return Mollifier(
        "triangular",
        lambda x: np.maximum(0.0, 1 - np.abs(x)),
        (-1.0, 1.0),
        cdf=lambda x: np.where(x < 0, 0.5 * (1 + x) ** 2, 1 - 0.5 * (1 - x) ** 2),
        ppf=lambda u: np.where(u < 0.5, np.sqrt(2 * u) - 1, 1 - np.sqrt(2 * (1 - u))),
        log_mgf=lambda s: 2 * _log_sinhc(s / 2),
        sup=1.0, mean=0.0, var=1.0 / 6)


_BUMP_NORM = integrate.quad(lambda x: np.exp(-1 / (1 - x * x)), -1, 1)[0]


def smooth_bump():
    """C-infinity bump ``exp(-1/(1-x^2))`` on [-1, 1], normalized."""
    def pdf(x):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < 1
        xx = np.where(inside, x, 0.0)
        return np.where(inside, np.exp(-1 / (1 - xx * xx)) / _BUMP_NORM, 0.0)
    return Mollifier("smooth_bump", pdf, (-1.0, 1.0), sup=np.exp(-1) / _BUMP_NORM, mean=0.0)


def uniform_mollifier(lo=0.0, hi=1.0):
    w = hi - lo
    return Mollifier(
        "uniform", lambda x: np.full(np.shape(x), 1 / w), (lo, hi),
        cdf=lambda x: (x - lo) / w, ppf=lambda u: lo + w * u,
        log_mgf=lambda s: s * (lo + hi) / 2 + _log_sinhc(s * w / 2),
        sup=1 / w, mean=(lo + hi) / 2, var=w * w / 12)


MOLLIFIERS = {"triangular": triangular, "smooth_bump": smooth_bump, "uniform": uniform_mollifier}


def smoothed_bernoulli_density(rho, v, x):
    """Density ``(1-rho) rho^-1 v(x/rho) + rho rho^-1 v((x-1)/rho)`` (no shift)."""
    if not 0 < rho < 1:
        raise ValidationError("rho must lie in (0, 1)")
    v.check()
    return _sb_density(rho, v, x)


def _sb_density(rho, v, x):
    x = np.asarray(x, dtype=float)
    return ((1 - rho) * v.pdf(x / rho) + rho * v.pdf((x - 1) / rho)) / rho


# ---------------------------------------------------------------------------
# laws

LAWS = ("bernoulli", "smoothed_bernoulli", "uniform_dilute", "tabulated")


@dataclass(frozen=True, eq=False)
class DisorderSpec:
    """Law of the i.i.d. site variables.

    ``rho`` is the law's density parameter. For ``bernoulli`` and
    ``uniform_dilute`` (uniform on ``[0, 2 rho]``) it equals the mean. For
    ``smoothed_bernoulli`` the value is ``B + rho X + shift`` with
    ``B ~ Bernoulli(rho)``, ``X ~ v`` and ``shift = -rho * inf supp v`` so that
    the essential infimum is 0; the mean is then ``rho(1 + mean v) + shift``.
    ``tabulated`` is a piecewise-constant density on ``edges`` with bin
    probabilities ``weights``; its ``rho`` is the computed mean.
    """

    law: str
    rho: float = 0.0
    mollifier: Mollifier = None
    edges: tuple = None
    weights: tuple = None
    holder: tuple = None  # optional (tau, C_H)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValidationError(f"unknown law {self.law!r}; expected one of {LAWS}")
        if self.law == "tabulated":
            edges = np.asarray(self.edges, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if edges.ndim != 1 or len(edges) != len(w) + 1 or np.any(np.diff(edges) <= 0):
                raise ValidationError("tabulated law needs increasing edges and len(edges) = len(weights)+1")
            if np.any(w < 0) or w.sum() <= 0:
                raise ValidationError("tabulated weights must be nonnegative with positive sum")
            if abs(w.sum() - 1.0) > 1e-12:
                w = w / w.sum()
            first = edges[:-1][w > 0][0]
            if edges[0] < 0 or first != 0:
                raise ValidationError("tabulated law must have essential infimum 0")
            object.__setattr__(self, "edges", tuple(map(float, edges)))
            object.__setattr__(self, "weights", tuple(map(float, w)))
            mean = float(np.sum(w * 0.5 * (edges[1:] + edges[:-1])))
            object.__setattr__(self, "rho", mean)
            return
        rho = float(self.rho)
        object.__setattr__(self, "rho", rho)
        if self.law == "smoothed_bernoulli":
            if not 0 < rho < 1:
                raise ValidationError("smoothed_bernoulli needs rho in (0, 1)")
            if self.mollifier is None:
                object.__setattr__(self, "mollifier", triangular())
            self.mollifier.check()
        elif not 0 <= rho <= 1:
            raise ValidationError("rho must lie in [0, 1]")

    # convenience constructors
    @classmethod
    def bernoulli(cls, rho):
        return cls("bernoulli", rho)

    @classmethod
    def smoothed_bernoulli(cls, rho, mollifier=None):
        return cls("smoothed_bernoulli", rho, mollifier=mollifier)

    @classmethod
    def uniform_dilute(cls, rho):
        return cls("uniform_dilute", rho, holder=(1.0, 0.5))

    @classmethod
    def tabulated(cls, edges, weights):
        return cls("tabulated", edges=tuple(edges), weights=tuple(weights))

    def with_rho(self, rho):
        return DisorderSpec(self.law, rho, self.mollifier, self.edges, self.weights, self.holder)

    # properties of the law
    @property
    def shift(self):
        if self.law == "smoothed_bernoulli":
            return -self.rho * self.mollifier.support[0]
        return 0.0

    @property
    def omega_plus(self):
        if self.law == "bernoulli":
            return 1.0 if self.rho > 0 else 0.0
        if self.law == "uniform_dilute":
            return 2 * self.rho
        if self.law == "smoothed_bernoulli":
            return 1 + self.rho * self.mollifier.support[1] + self.shift
        return float(self.edges[-1])

    @property
    def is_atomic(self):
        return self.law == "bernoulli" or (self.law == "uniform_dilute" and self.rho == 0)

    @property
    def mean(self):
        if self.law in ("bernoulli", "uniform_dilute", "tabulated"):
            return self.rho
        return self.rho * (1 + self.mollifier.mean) + self.shift

    @property
    def variance(self):
        r = self.rho
        if self.law == "bernoulli":
            return r * (1 - r)
        if self.law == "uniform_dilute":
            return (2 * r) ** 2 / 12
        if self.law == "smoothed_bernoulli":
            return r * (1 - r) + r * r * self.mollifier.var
        e = np.asarray(self.edges)
        w = np.asarray(self.weights)
        a, b = e[:-1], e[1:]
        m2 = np.sum(w * (a * a + a * b + b * b) / 3)
        return float(m2 - self.rho ** 2)

    def transform(self, u):
        """Map uniforms of shape ``(..., 2)`` to site values of shape ``(...)``."""
        u = np.asarray(u, dtype=float)
        sel, shp = u[..., 0], u[..., 1]
        r = self.rho
        if self.law == "bernoulli":
            return (sel < r).astype(float)
        if self.law == "uniform_dilute":
            return 2 * r * shp
        if self.law == "smoothed_bernoulli":
            return (sel < r) + r * self.mollifier.ppf(shp) + self.shift
        e = np.asarray(self.edges)
        w = np.asarray(self.weights)
        cw = np.concatenate([[0.0], np.cumsum(w)])
        cw[-1] = 1.0
        k = np.clip(np.searchsorted(cw, sel, side="right") - 1, 0, len(w) - 1)
        return e[k] + (e[k + 1] - e[k]) * shp

    def sample(self, rng, shape):
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        return self.transform(rng.random(shape + (2,)))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        r = self.rho
        if self.law == "bernoulli":
            return np.where(x < 0, 0.0, np.where(x < 1, 1 - r, 1.0)) if r < 1 else (x >= 1).astype(float)
        if self.law == "uniform_dilute":
            if r == 0:
                return (x >= 0).astype(float)
            return np.clip(x / (2 * r), 0, 1)
        if self.law == "smoothed_bernoulli":
            y = x - self.shift
            v = self.mollifier
            return (1 - r) * v.cdf(y / r) + r * v.cdf((y - 1) / r)
        e = np.asarray(self.edges)
        w = np.asarray(self.weights)
        frac = np.clip((x[..., None] - e[:-1]) / np.diff(e), 0, 1)
        return frac @ w

    def pdf(self, x):
        """Density of the (shifted) law; ``None`` for atomic laws."""
        if self.is_atomic:
            return None
        x = np.asarray(x, dtype=float)
        r = self.rho
        if self.law == "uniform_dilute":
            return np.where((x >= 0) & (x <= 2 * r), 1 / (2 * r), 0.0)
        if self.law == "smoothed_bernoulli":
            return _sb_density(r, self.mollifier, x - self.shift)
        e = np.asarray(self.edges)
        w = np.asarray(self.weights)
        k = np.searchsorted(e, x, side="right") - 1
        inside = (k >= 0) & (k < len(w))
        kk = np.clip(k, 0, len(w) - 1)
        return np.where(inside, w[kk] / np.diff(e)[kk], 0.0)

    def log_mgf(self, t):
        """``log E[exp(t omega_0)]``, exact for every shipped law."""
        t = np.asarray(t, dtype=float)
        r = self.rho
        if self.law == "bernoulli":
            if r == 0:
                return np.zeros_like(t)
            if r == 1:
                return t.copy()
            return np.logaddexp(np.log1p(-r), np.log(r) + t)
        if self.law == "uniform_dilute":
            return t * r + _log_sinhc(t * r)
        if self.law == "smoothed_bernoulli":
            return (t * self.shift + self.mollifier.log_mgf(r * t)
                    + np.logaddexp(np.log1p(-r), np.log(r) + t))
        e = np.asarray(self.edges)
        w = np.asarray(self.weights)
        a, b = e[:-1], e[1:]
        tt = t[..., None]
        terms = np.log(np.where(w > 0, w, 1.0)) + tt * (a + b) / 2 + _log_sinhc(tt * (b - a) / 2)
        terms = np.where(w > 0, terms, -np.inf)
        return special.logsumexp(terms, axis=-1)

    # serialization
    def to_dict(self):
        d = {"law": self.law, "rho": self.rho}
        if self.law == "smoothed_bernoulli":
            d["mollifier"] = self.mollifier.name
            if self.mollifier.name == "uniform":
                d["mollifier_support"] = list(self.mollifier.support)
        if self.law == "tabulated":
            d["edges"] = list(self.edges)
            d["weights"] = list(self.weights)
            d.pop("rho")
        if self.holder is not None:
            d["holder"] = list(self.holder)
        return d

    @classmethod
    def from_dict(cls, data):
        law = data["law"]
        holder = tuple(data["holder"]) if data.get("holder") else None
        if law == "tabulated":
            return cls("tabulated", edges=tuple(data["edges"]), weights=tuple(data["weights"]),
                       holder=holder)
        moll = None
        if law == "smoothed_bernoulli":
            name = data.get("mollifier", "triangular")
            if name not in MOLLIFIERS:
                raise ValidationError(f"unknown mollifier {name!r}")
            moll = MOLLIFIERS[name](*data.get("mollifier_support", ()))
        if law == "uniform_dilute" and holder is None:
            holder = (1.0, 0.5)
        return cls(law, float(data["rho"]), mollifier=moll, holder=holder)


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True, eq=False)
class PotentialSample:
    box: Box
    values: np.ndarray
    seed: int
    replica: int
    spec: DisorderSpec

    def to_csv(self, path):
        sites = self.box.sites()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.box.dimension)] + ["value"])
            for s, v in zip(sites, self.values.ravel()):
                w.writerow([*map(int, s), repr(float(v))])


def sample_potential(spec, box, seed, replica=0):
    """I.i.d. site values on ``box``, reproducible from ``(seed, replica)``."""
    rng = replica_rng(seed, replica)
    values = spec.sample(rng, box.shape)
    return PotentialSample(box, values, int(seed), int(replica), spec)


# ---------------------------------------------------------------------------
# Hoelder regularity


@dataclass(frozen=True)
class HolderCheck:
    ok: bool
    constant: float
    interval: tuple
    tau: float
    reason: str = ""


def holder_certificate_check(spec, tau, intervals=None, n_intervals=4000, seed=0):
    """Estimate ``sup P[a <= w <= b] / (|b-a|^tau rho^-tau)`` over probed intervals.

    Atomic laws fail by construction (``ok=False``).
    """
    if not 0 < tau <= 1:
        raise ValidationError("tau must lie in (0, 1]")
    if spec.is_atomic:
        return HolderCheck(False, float("inf"), (0.0, 0.0), tau,
                           "law has an atom; no Hoelder bound holds")
    if intervals is None:
        rng = replica_rng(seed, 0, stream=7)
        hi = spec.omega_plus
        a = rng.uniform(-0.05 * hi, hi, n_intervals)
        length = hi * 10 ** rng.uniform(-5, 0, n_intervals)
        intervals = np.stack([a, a + length], axis=1)
    iv = np.asarray(intervals, dtype=float)
    a, b = iv[:, 0], iv[:, 1]
    if np.any(b <= a):
        raise ValidationError("intervals need a < b")
    prob = spec.cdf(b) - spec.cdf(a)
    ratio = prob / ((b - a) ** tau * spec.rho ** (-tau))
    i = int(np.argmax(ratio))
    return HolderCheck(True, float(ratio[i]), (float(a[i]), float(b[i])), tau)
