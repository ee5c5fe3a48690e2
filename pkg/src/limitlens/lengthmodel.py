"""Log-normal length model: fit, cramming size, run-over, limit solving.

The empirical length density is assumed log-normal except for the
"crammed" tail squeezed against the enforced limit. The pipeline is:

1. smooth the density (moving average, window 5) to stabilize step 2;
2. locate the cramming threshold t = the rightmost local minimum of the
   smoothed density between L/2 and the limit L;
3. least-squares fit A * lognormal(l; mu, sigma) to the raw density on
   [lo, t), i.e. excluding the crammed tail (A is a free amplitude so
   the body shape alone drives mu and sigma);
4. cramming size = clipped excess empirical mass over the fitted curve
   on [t, L]; run-over at c = normalized fitted tail mass beyond c.

Solving for a counterfactual limit c* with run-over r inverts the tail:
c* = exp(mu + sigma * ppf(1 - r)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .histstore import LengthHistogram
from .normal import norm_ppf, norm_sf

DEFAULT_FIT_LO = 5
DEFAULT_SMOOTH_WINDOW = 5


class FitError(ValueError):
    """Fit could not be computed; carries the best parameters seen, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class FitResult:
    mu: float
    sigma: float
    amplitude: float
    threshold: int
    fit_range: tuple[int, int]  # [lo, hi) lengths used
    sse: float
    limit: int

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "amplitude": self.amplitude,
            "threshold": self.threshold,
            "fit_lo": self.fit_range[0],
            "fit_hi": self.fit_range[1],
            "sse": self.sse,
            "limit": self.limit,
        }


@dataclass(frozen=True)
class CramEstimate:
    cramming: float
    fit: FitResult

    def runover_at(self, c: int) -> float:
        return runover(self.fit, c)


def lognormal_pdf(x, mu: float, sigma: float):
    x = np.asarray(x, dtype=float)
    return (np.exp(-((np.log(x) - mu) ** 2) / (2.0 * sigma * sigma))
            / (x * sigma * math.sqrt(2.0 * math.pi)))


def smooth_density(h: LengthHistogram, window: int = DEFAULT_SMOOTH_WINDOW) -> np.ndarray:
    """Centered moving average of the normalized density.

    Edge positions use truncated windows. Index 0 stays unused and does
    not bleed into the average at length 1.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    d = h.density()
    body = d[1:]
    half = window // 2
    n = len(body)
    cum = np.concatenate(([0.0], np.cumsum(body)))
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    out = np.empty_like(d)
    out[0] = 0.0
    out[1:] = (cum[hi] - cum[lo]) / (hi - lo)
    return out


def find_cramming_threshold(density: np.ndarray, limit: int) -> int:
    """Rightmost local minimum of the density in [limit/2, limit - 1].

    A local minimum at i requires density[i] < density[i-1] and
    density[i] <= density[i+1]. Without one, falls back to 0.9 * limit.
    """
    if limit < 10:
        raise ValueError(f"limit too small for threshold detection: {limit}")
    if len(density) <= limit:
        raise ValueError(f"density array covers lengths up to {len(density) - 1}, "
                         f"need at least {limit}")
    lo_bound = (limit + 1) // 2
    for i in range(limit - 1, lo_bound - 1, -1):
        if density[i] < density[i - 1] and density[i] <= density[i + 1]:
            return i
    return (9 * limit) // 10


def fit_lognormal(density: np.ndarray, lo: int, threshold: int, limit: int) -> FitResult:
    """Least-squares fit of A * lognormal(l) to density on [lo, threshold).

    Mirrors the tail-exclusion fit: the crammed range [threshold, limit]
    contributes nothing to the objective. The amplitude A is free, so
    scaling the input density scales A and sse but not mu or sigma.
    """
    if not 1 <= lo < threshold:
        raise FitError(f"empty fit range [{lo}, {threshold})")
    support = np.arange(lo, threshold, dtype=float)
    y = np.asarray(density[lo:threshold], dtype=float)
    positive = y > 0
    if int(positive.sum()) < 10:
        raise FitError(f"need at least 10 positive-density lengths in "
                       f"[{lo}, {threshold}), found {int(positive.sum())}")

    # Initialization from the weighted log-length moments of the fit range.
    w = y / y.sum()
    logs = np.log(support)
    mu0 = float(logs[np.searchsorted(np.cumsum(w), 0.5)])
    var0 = float(np.sum(w * (logs - np.sum(w * logs)) ** 2))
    if var0 <= 0.0:
        raise FitError("zero variance of log lengths in the fit range")
    sigma0 = math.sqrt(var0)

    def residuals(params):
        a, m, s = params[2], params[0], params[1]
        return a * lognormal_pdf(support, m, s) - y

    result = least_squares(
        residuals,
        x0=np.array([mu0, sigma0, 1.0]),
        bounds=(np.array([-np.inf, 1e-12, 0.0]), np.array([np.inf, np.inf, np.inf])),
        xtol=1e-12, ftol=1e-12, gtol=1e-12,
        max_nfev=2000,
    )
    mu, sigma, amplitude = (float(v) for v in result.x)
    sse = float(np.sum(result.fun ** 2))
    fit = FitResult(mu=mu, sigma=sigma, amplitude=amplitude, threshold=threshold,
                    fit_range=(lo, threshold), sse=sse, limit=limit)
    if result.status == 0:
        raise FitError("optimizer exhausted its iteration budget", best=fit)
    return fit


def cramming_size(h: LengthHistogram, fit: FitResult) -> float:
    """Clipped excess empirical mass over the fitted curve on [t, L]."""
    d = h.density()
    upper = min(fit.limit, h.max_len)
    lengths = np.arange(fit.threshold, upper + 1, dtype=float)
    excess = d[fit.threshold:upper + 1] - fit.amplitude * lognormal_pdf(lengths, fit.mu, fit.sigma)
    return float(np.clip(excess, 0.0, None).sum())


def runover(fit: FitResult, c: int) -> float:
    """Normalized fitted tail mass beyond c characters.

    The fitted distribution is treated as a proper density: the
    amplitude plays no role here.
    """
    if c < 1:
        raise ValueError(f"character count must be >= 1, got {c}")
    return norm_sf((math.log(c) - fit.mu) / fit.sigma)


def solve_limit(fit: FitResult, target: float) -> float:
    """Character limit whose run-over equals the target fraction."""
    if not 0.0 < target < 1.0:
        raise ValueError(f"target run-over must lie in (0, 1), got {target!r}")
    return math.exp(fit.mu + fit.sigma * norm_ppf(1.0 - target))


def analyze_histogram(h: LengthHistogram, limit: int,
                      lo: int = DEFAULT_FIT_LO,
                      window: int = DEFAULT_SMOOTH_WINDOW) -> CramEstimate:
    """Run the full threshold -> fit -> cramming pipeline on one histogram."""
    smoothed = smooth_density(h, window)
    threshold = find_cramming_threshold(smoothed, limit)
    fit = fit_lognormal(h.density(), lo, threshold, limit)
    return CramEstimate(cramming=cramming_size(h, fit), fit=fit)
