"""Small statistical helpers used by the Monte Carlo estimators."""
from dataclasses import dataclass

import numpy as np
from scipy import stats

Z95 = 1.959963984540054


def mean_ci(samples, axis=0, z=Z95):
    """Mean and normal-approximation CI half-width along ``axis``.

    With fewer than two samples the half-width is ``nan``.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[axis]
    mean = samples.mean(axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    sd = samples.std(axis=axis, ddof=1)
    return mean, z * sd / np.sqrt(n)


@dataclass(frozen=True)
class Proportion:
    estimate: float
    ci: float
    hits: int
    trials: int
    upper_bound_only: bool = False

    @property
    def low(self):
        return max(0.0, self.estimate - self.ci)

    @property
    def high(self):
        return min(1.0, self.estimate + self.ci)


def proportion(hits, trials, z=Z95):
    """Binomial frequency with a normal CI; zero hits give the rule of three."""
    hits, trials = int(hits), int(trials)
    if trials == 0:
        return Proportion(float("nan"), float("nan"), 0, 0)
    if hits == 0:
        return Proportion(0.0, 3.0 / trials, 0, trials, upper_bound_only=True)
    p = hits / trials
    return Proportion(p, float(z * np.sqrt(p * (1 - p) / trials)), hits, trials)


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r2: float
    slope_stderr: float
    n: int


def line_fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    res = stats.linregress(x, y)
    return LineFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2),
                   float(res.stderr), len(x))
