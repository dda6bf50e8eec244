"""Odd-integer scale plans, coarse-graining, block-mean events and Chernoff bounds."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from ._parallel import chunks, ordered_map
from ._rng import replica_rng
from ._stats import proportion
from .errors import OrderingError, ValidationError

_CEIL_TOL = 1e-9


def odd_ceil(x):
    """Smallest odd integer ``>= x``; floats within ``1e-9`` relative of an integer snap to it."""
    x = float(x)
    if not x >= 1 - _CEIL_TOL:
        raise ValidationError(f"odd_ceil needs x >= 1, got {x}")
    n = math.ceil(x - _CEIL_TOL * max(1.0, abs(x)))
    return n if n % 2 else n + 1


# ---------------------------------------------------------------------------
# scale plans


@dataclass(frozen=True)
class ScalePlan:
    rho: float
    alpha: float
    alpha_p: float
    gamma: float
    d: int
    N: int
    L: int
    K: int
    Lp: int
    Kp: int
    factors: tuple  # ([rho^((a'-a)/2)]_o, [rho^(-a'/4)]_o, [rho^-gamma]_o)
    trace: tuple = field(default=(), compare=False)

    @property
    def eps(self):
        return (self.alpha_p - 2) / 8

    @property
    def R(self):
        return (2 * self.Lp + 1) ** self.d

    @property
    def cell_side(self):
        return 2 * self.N + 1

    @property
    def eps_zero(self):
        return self.eps <= 0

    @property
    def nested(self):
        return self.K < self.Kp and self.Lp < self.L

    @property
    def degenerate(self):
        return all(f <= 3 for f in self.factors) or not self.nested

    @property
    def chain_ok(self):
        return self.alpha > self.alpha_p * (self.d + 1) / self.d > 2 * (self.d + 1) / self.d

    @property
    def threshold_ok(self):
        return self.d * (self.alpha - self.alpha_p) / 2 > 1

    def identity_holds(self):
        n = self.cell_side
        return n == (2 * self.L + 1) * (2 * self.K + 1) == (2 * self.Lp + 1) * (2 * self.Kp + 1)


def build_scale_plan(rho, alpha, alpha_p, gamma, d=1):
    """Scale tuple ``(N, L, K, L', K')`` from the odd-ceiling factors.

    ``2L'+1 = f1``, ``2K'+1 = f2 f3``, ``2L+1 = f1 f2``, ``2K+1 = f3`` with
    ``f1 = [rho^((alpha'-alpha)/2)]_o``, ``f2 = [rho^(-alpha'/4)]_o`` and
    ``f3 = [rho^-gamma]_o``. The construction needs ``alpha > alpha' >= 2``;
    the stronger chain ``alpha > alpha' (d+1)/d > 2 (d+1)/d`` is reported as
    ``chain_ok``, and ``alpha' = 2`` shows up as ``eps_zero``.
    """
    if not 0 < rho <= 1:
        raise ValidationError("rho must lie in (0, 1]")
    if d < 1 or gamma <= 0:
        raise ValidationError("need d >= 1 and gamma > 0")
    if not alpha > alpha_p >= 2:
        raise OrderingError(f"need alpha > alpha' >= 2, got alpha={alpha}, alpha'={alpha_p}")
    e1, e2, e3 = (alpha_p - alpha) / 2, -alpha_p / 4, -gamma
    f1, f2, f3 = (odd_ceil(rho ** e) for e in (e1, e2, e3))
    lp, kp, l_, k_ = (f1 - 1) // 2, (f2 * f3 - 1) // 2, (f1 * f2 - 1) // 2, (f3 - 1) // 2
    n = (f1 * f2 * f3 - 1) // 2
    trace = (
        f"[rho^{e1:g}]_o = [{rho ** e1:.6g}]_o = {f1}",
        f"[rho^{e2:g}]_o = [{rho ** e2:.6g}]_o = {f2}",
        f"[rho^{e3:g}]_o = [{rho ** e3:.6g}]_o = {f3}",
        f"2L'+1 = {f1}", f"2K'+1 = {f2}*{f3} = {f2 * f3}",
        f"2L+1 = {f1}*{f2} = {f1 * f2}", f"2K+1 = {f3}",
        f"2N+1 = {f1 * f2 * f3}",
    )
    return ScalePlan(rho, alpha, alpha_p, gamma, d, n, l_, k_, lp, kp, (f1, f2, f3), trace)


# ---------------------------------------------------------------------------
# coarse graining


def coarse_grain(a, plan=None, *, block_half_side=None, d=None):
    """Block-average ``a`` over cubes of side ``2L'+1`` and restore the norm.

    ``a`` is an array on the cell ``Z^d_{2N+1}`` (shape ``(n,)*d`` or flat
    with ``d`` given). The block size comes from ``plan.Lp`` or
    ``block_half_side``.
    """
    a = np.asarray(a)
    if plan is not None:
        b, d = 2 * plan.Lp + 1, plan.d
    elif block_half_side is not None:
        b = 2 * block_half_side + 1
    else:
        raise ValidationError("give a plan or block_half_side")
    d = d or a.ndim
    n = int(round(a.size ** (1 / d)))
    if n ** d != a.size or n % b:
        raise ValidationError(f"cell of {a.size} sites is not a union of {b}^{d} blocks")
    x = a.reshape((n,) * d)
    m = n // b
    split = x.reshape(sum(((m, b) for _ in range(d)), ()))
    means = split.mean(axis=tuple(range(1, 2 * d, 2)), keepdims=True)
    out = np.broadcast_to(means, split.shape).reshape((n,) * d)
    norm_a, norm_o = np.linalg.norm(a), np.linalg.norm(out)
    if norm_o > 0:
        out = out * (norm_a / norm_o)
    return out.reshape(a.shape)


def fourier_localized(n, K, d=1, rng=None):
    """Random unit vector on ``Z^d_n`` with DFT support in ``|k|_inf <= K``."""
    rng = rng or np.random.default_rng()
    freqs = np.fft.fftfreq(n, 1 / n)
    mask = np.ones((n,) * d, dtype=bool)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n
        mask &= (np.abs(freqs) <= K).reshape(shape)
    spec = (rng.normal(size=(n,) * d) + 1j * rng.normal(size=(n,) * d)) * mask
    a = np.fft.ifftn(spec)
    return a / np.linalg.norm(a)


# ---------------------------------------------------------------------------
# block-mean events


@dataclass(frozen=True)
class OmegaEvent:
    """``+``: block mean ``<= C rho^(1+eps)``; ``-``: block mean ``>= C rho^(1-eps)``."""

    sign: str
    R: int
    C: float
    eps: float
    rho: float
    threshold_override: float = None

    def __post_init__(self):
        if self.sign not in ("+", "-"):
            raise ValidationError("sign must be '+' or '-'")
        if not self.C > 0:
            raise ValidationError("C must be positive")

    @property
    def threshold(self):
        if self.threshold_override is not None:
            return self.threshold_override
        e = self.eps if self.sign == "+" else -self.eps
        return self.C * self.rho ** (1 + e)

    @property
    def side(self):
        return "lower" if self.sign == "+" else "upper"

    def occurs(self, means):
        means = np.asarray(means)
        return means <= self.threshold if self.sign == "+" else means >= self.threshold


def event_for(plan, spec, sign, C, threshold=None):
    return OmegaEvent(sign, plan.R, C, plan.eps, spec.rho, threshold)


@dataclass(frozen=True)
class EventFrequency:
    event: OmegaEvent
    frequency: object  # Proportion
    samples: int


def block_means(spec, R, samples, seed, chunk=4096, threads=None):
    """Means of ``R`` i.i.d. draws, ``samples`` times; deterministic chunking."""
    if R == 0:
        return np.full(samples, np.nan)

    def task(idx):
        rng = replica_rng(seed, idx.start // chunk, 3)
        out = np.empty(len(idx))
        step = max(1, 2 ** 22 // R)
        for i in range(0, len(idx), step):
            k = min(step, len(idx) - i)
            out[i:i + k] = spec.sample(rng, (k, R)).mean(axis=1)
        return out

    parts = ordered_map(task, chunks(samples, chunk), threads)
    return np.concatenate(parts) if parts else np.empty(0)


def omega_pm_probability(spec, plan, sign, C, samples, seed, threshold=None, R=None, threads=None):
    """Monte Carlo frequency of the block-mean event over ``R = (2L'+1)^d`` draws."""
    ev = event_for(plan, spec, sign, C, threshold) if plan is not None else \
        OmegaEvent(sign, R, C, 0.0, spec.rho, threshold)
    if R is not None:
        ev = OmegaEvent(sign, R, C, ev.eps, spec.rho, threshold)
    means = block_means(spec, ev.R, samples, seed, threads=threads)
    hits = int(np.sum(ev.occurs(means)))
    return EventFrequency(ev, proportion(hits, samples), samples)


def exact_bernoulli_tail(R, p, threshold, side="lower"):
    """``P(mean <= t)`` or ``P(mean >= t)`` for ``mean = Binomial(R, p) / R``."""
    x = threshold * R
    if side == "lower":
        k = math.floor(x + 1e-9)
        return float(stats.binom.cdf(k, R, p))
    k = math.ceil(x - 1e-9)
    return float(stats.binom.sf(k - 1, R, p))


# ---------------------------------------------------------------------------
# Chernoff bounds


@dataclass(frozen=True)
class ChernoffBound:
    bound: float
    log_bound: float
    t: float
    vacuous: bool
    R: int
    threshold: float
    side: str


def chernoff_bound(spec, R, threshold, side="lower", t_max=1e4, n_grid=400):
    """Markov bound ``inf_t E[e^{-+t w}]^R e^{+-R t a}`` on the block-mean tail.

    Evaluated in log space with the law's exact log-MGF on a log-spaced
    ``t``-grid, refined by a bounded scalar minimization. Any ``t`` gives a
    valid bound, so the refinement only sharpens it. Thresholds outside
    ``(ess inf, mean)`` (lower) or ``(mean, omega_+)`` (upper) return the
    vacuous value 1, flagged.
    """
    if side not in ("lower", "upper"):
        raise ValidationError("side must be 'lower' or 'upper'")
    a = float(threshold)
    mu = spec.mean
    feasible = (0 <= a < mu) if side == "lower" else (mu < a <= spec.omega_plus)
    if R == 0 or not feasible:
        return ChernoffBound(1.0, 0.0, 0.0, R != 0, R, a, side)
    sgn = -1.0 if side == "lower" else 1.0

    def f(t):
        return R * (float(spec.log_mgf(sgn * t)) - sgn * t * a)

    grid = np.concatenate([[0.0], np.logspace(-6, math.log10(t_max), n_grid)])
    vals = np.array([f(t) for t in grid])
    i = int(np.nanargmin(vals))
    lo, hi = grid[max(0, i - 1)], grid[min(len(grid) - 1, i + 1)]
    best_t, best = grid[i], vals[i]
    if hi > lo:
        res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, hi)})
        if res.fun < best:
            best_t, best = float(res.x), float(res.fun)
    best = min(best, 0.0)
    return ChernoffBound(math.exp(best), best, best_t, False, R, a, side)


def chernoff_event_bound(spec, event):
    return chernoff_bound(spec, event.R, event.threshold, event.side)


@dataclass(frozen=True)
class UnionBound:
    n_events: int
    worst_plus: float
    worst_minus: float
    log_total: float

    @property
    def total(self):
        return math.exp(self.log_total)

    @property
    def worst(self):
        return max(self.worst_plus, self.worst_minus)


def union_bound(plan, spec, C_plus, C_minus, minima=1):
    """Union over ``M^2 (2K'+1)^d`` block events of the worst Chernoff bound.

    ``log_total = log(n_events) + log(worst)``, an identity on the bound values.
    """
    n_events = minima ** 2 * (2 * plan.Kp + 1) ** plan.d
    plus = chernoff_event_bound(spec, event_for(plan, spec, "+", C_plus))
    minus = chernoff_event_bound(spec, event_for(plan, spec, "-", C_minus))
    worst_log = max(plus.log_bound, minus.log_bound)
    return UnionBound(n_events, plus.bound, minus.bound, math.log(n_events) + worst_log)
