"""Statistical analyses on top of the histogram store and length model.

Covers the daily estimate series with rolling means and bootstrap CIs,
the difference-in-differences effect of the limit doubling, thread-count
estimation from pagination markers, Spearman rank correlation, and
length-conditioned lexicon category curves.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np
from scipy.special import stdtr

from .charcount import CountingConfig, extract_display_text, normalize_text, weighted_length
from .histstore import HistStore, LengthHistogram, fraction_exceeding
from .ingest import DEFAULT_SWITCH_DAY
from .lengthmodel import FitError, analyze_histogram, runover, solve_limit
from .normal import norm_ppf

QUANTITIES = ("cramming", "fraction_exceeding", "runover", "solved_limit")


@dataclass(frozen=True)
class SeriesPoint:
    day: date
    value: float


@dataclass
class DailySeries:
    quantity: str
    points: list  # of SeriesPoint, days strictly increasing
    gaps: list = field(default_factory=list)  # (day, reason)

    def days(self) -> list[date]:
        return [p.day for p in self.points]

    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points], dtype=float)


def enforced_limit(day: date, switch_day: date = DEFAULT_SWITCH_DAY,
                   pre: int = 140, post: int = 280) -> int:
    return pre if day < switch_day else post


def daily_series(store: HistStore, quantity: str, device: str | None = None,
                 langs=None, *, switch_day: date = DEFAULT_SWITCH_DAY,
                 threshold: int = 140, at: int = 280, target: float = 0.05,
                 fit_lo: int = 5, window: int = 5,
                 day_range=None) -> DailySeries:
    """Per-day estimates over the store; failed days become gaps.

    quantity selects the estimator: "cramming" (at that day's enforced
    limit), "fraction_exceeding" (above `threshold`), "runover" (of the
    day's fit, at `at`) or "solved_limit" (characters needed for the
    `target` run-over).
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")
    devices = [device] if device is not None else None
    store_days = store.days()
    if not store_days:
        return DailySeries(quantity=quantity, points=[], gaps=[])
    first = day_range[0] if day_range else store_days[0]
    last = day_range[1] if day_range else store_days[-1]

    points: list[SeriesPoint] = []
    gaps: list = []
    day = first
    while day <= last:
        h = store.query(day_range=(day, day), langs=langs, devices=devices)
        if h.total == 0:
            gaps.append((day, "no_data"))
            day += timedelta(days=1)
            continue
        try:
            if quantity == "fraction_exceeding":
                value = fraction_exceeding(h, threshold)
            else:
                limit = enforced_limit(day, switch_day)
                estimate = analyze_histogram(h, limit, lo=fit_lo, window=window)
                if quantity == "cramming":
                    value = estimate.cramming
                elif quantity == "runover":
                    value = estimate.runover_at(at)
                else:
                    value = solve_limit(estimate.fit, target)
        except FitError as exc:
            gaps.append((day, f"fit_error: {exc}"))
            day += timedelta(days=1)
            continue
        points.append(SeriesPoint(day=day, value=float(value)))
        day += timedelta(days=1)
    return DailySeries(quantity=quantity, points=points, gaps=gaps)


def rolling_mean(series: DailySeries, window: int = 10) -> DailySeries:
    """Trailing mean of up to `window` most recent present points.

    Gap days are skipped entirely, matching a rolling average drawn
    through the available daily estimates only.
    """
    values = series.values()
    out = []
    for i, point in enumerate(series.points):
        lo = max(0, i - window + 1)
        out.append(SeriesPoint(day=point.day, value=float(values[lo:i + 1].mean())))
    return DailySeries(quantity=f"{series.quantity}_rolling{window}",
                       points=out, gaps=list(series.gaps))


def bootstrap_ci(values, n_resamples: int = 1000, level: float = 0.95,
                 seed: int = 0):
    """Percentile bootstrap CI of the mean over daily estimates.

    Resamples whole days with replacement; deterministic under a fixed
    seed. Returns (mean, lo, hi).
    """
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("bootstrap needs at least one value")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(n_resamples, arr.size))
    means = arr[idx].mean(axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [tail, 100.0 - tail])
    return float(arr.mean()), float(lo), float(hi)


@dataclass(frozen=True)
class DiDResult:
    alpha: float
    beta: float
    gamma: float
    delta: float
    delta_se: float
    effect: float            # e^delta - 1
    ci95: tuple              # 95% CI of the effect
    n_obs: int

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "delta": self.delta, "delta_se": self.delta_se,
            "effect": self.effect, "ci95_lo": self.ci95[0],
            "ci95_hi": self.ci95[1], "n_obs": self.n_obs,
        }


def did_estimate(panel) -> DiDResult:
    """OLS of y ~ treated * period on a daily panel.

    `panel` rows are (day, group, period, y) with group in
    {"treated", "control"}, period in {"pre", "post"} and y the log of
    that day's average tweet length. The interaction coefficient delta
    is the effect of the switch on log average length; standard errors
    are homoskedastic OLS.
    """
    rows = list(panel)
    if not rows:
        raise ValueError("empty panel")
    treated = np.empty(len(rows))
    period = np.empty(len(rows))
    y = np.empty(len(rows))
    for i, (_, group, when, value) in enumerate(rows):
        if group not in ("treated", "control"):
            raise ValueError(f"unknown group {group!r}")
        if when not in ("pre", "post"):
            raise ValueError(f"unknown period {when!r}")
        treated[i] = 1.0 if group == "treated" else 0.0
        period[i] = 1.0 if when == "post" else 0.0
        y[i] = value
    for g in (0.0, 1.0):
        for p in (0.0, 1.0):
            if not np.any((treated == g) & (period == p)):
                raise ValueError(
                    f"empty design cell: group={'treated' if g else 'control'}, "
                    f"period={'post' if p else 'pre'}")

    X = np.column_stack([np.ones(len(rows)), treated, period, treated * period])
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = len(rows) - 4
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(X.T @ X)
        delta_se = math.sqrt(cov[3, 3])
    else:
        delta_se = float("nan")
    alpha, beta, gamma, delta = (float(c) for c in coef)
    z = norm_ppf(0.975)
    ci = (math.expm1(delta - z * delta_se), math.expm1(delta + z * delta_se)) \
        if math.isfinite(delta_se) else (float("nan"), float("nan"))
    return DiDResult(alpha=alpha, beta=beta, gamma=gamma, delta=delta,
                     delta_se=delta_se, effect=math.expm1(delta), ci95=ci,
                     n_obs=len(rows))


def panel_from_store(store: HistStore, filters, *, pre_range, post_range,
                     devices=None) -> list:
    """Build a DiD panel of daily log mean lengths from a store.

    Lengths must have been counted with one fixed counting config across
    both periods for the group means to be comparable.
    """
    panel = []
    lengths = np.arange(store.max_len + 1)
    for when, (start, end) in (("pre", pre_range), ("post", post_range)):
        day = start
        while day <= end:
            for group, langs in (("treated", filters.treated_languages),
                                 ("control", filters.control_languages)):
                h = store.query(day_range=(day, day), langs=langs, devices=devices)
                if h.total == 0:
                    continue
                mean_len = float((h.counts * lengths).sum()) / h.total
                panel.append((day, group, when, math.log(mean_len)))
            day += timedelta(days=1)
    return panel


_PAGINATION_RE = re.compile(r"(\d{1,9})\s*/\s*(\d{1,9})\s*\Z")

DEFAULT_K_MAX = 50


def detect_pagination(text: str, k_max: int = DEFAULT_K_MAX):
    """Trailing "i/k" thread marker, or None.

    Only a marker at the very end of the text counts, and it must be
    plausible: 1 <= i <= k <= k_max. This rejects dates ("7/3" backwards
    counts), fractions mid-text and season-style years.
    """
    m = _PAGINATION_RE.search(text)
    if m is None:
        return None
    i, k = int(m.group(1)), int(m.group(2))
    if 1 <= i <= k <= k_max:
        return (i, k)
    return None


@dataclass(frozen=True)
class ThreadEstimate:
    epsilon: float
    n: dict       # k -> observed paginated tweet count
    m: dict       # k -> estimated total threads of length k
    distribution: dict  # k -> normalized share of threads

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "n": {str(k): v for k, v in sorted(self.n.items())},
            "m": {str(k): v for k, v in sorted(self.m.items())},
            "distribution": {str(k): v for k, v in sorted(self.distribution.items())},
        }


def estimate_threads(counts, epsilon: float = 0.01,
                     k_max: int = DEFAULT_K_MAX) -> ThreadEstimate:
    """Invert the sampling relation n_k = epsilon * k * m_k.

    `counts` maps thread length k to the number of sampled tweets whose
    pagination marker names that length; unpaginated tweets belong at
    k = 1.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"sampling rate must lie in (0, 1], got {epsilon!r}")
    n = {int(k): int(v) for k, v in counts.items() if 1 <= int(k) <= k_max}
    m = {k: n_k / (epsilon * k) for k, n_k in n.items()}
    total = sum(m.values())
    dist = {k: (v / total if total > 0 else 0.0) for k, v in m.items()}
    return ThreadEstimate(epsilon=epsilon, n=n, m=m, distribution=dist)


def count_paginations(texts, k_max: int = DEFAULT_K_MAX) -> dict:
    """Tally n_k over a stream of tweet texts; unpaginated ones are k=1."""
    counts: dict = {}
    for text in texts:
        hit = detect_pagination(text, k_max)
        k = hit[1] if hit else 1
        counts[k] = counts.get(k, 0) + 1
    return counts


def average_ranks(values) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their positions."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size, dtype=float)
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _rank_corr(rx: np.ndarray, ry: np.ndarray) -> float:
    cx = rx - rx.mean()
    cy = ry - ry.mean()
    denom = math.sqrt(float(cx @ cx) * float(cy @ cy))
    return float(cx @ cy) / denom


def spearman(xs, ys, method: str = "t"):
    """Spearman rank correlation with average-rank tie handling.

    The p-value uses the Student-t approximation by default; for n <= 10
    an exact permutation p-value is available with method="exact".
    Returns (rho, p).
    """
    x = np.asarray(list(xs), dtype=float)
    y = np.asarray(list(ys), dtype=float)
    if x.size != y.size:
        raise ValueError("inputs must have equal length")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("correlation undefined for a constant input")
    rx, ry = average_ranks(x), average_ranks(y)
    rho = min(1.0, max(-1.0, _rank_corr(rx, ry)))

    if method == "t":
        if abs(rho) >= 1.0:
            return rho, 0.0
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = 2.0 * float(stdtr(n - 2, -abs(t)))
        return rho, p
    if method == "exact":
        if n > 10:
            raise ValueError("exact permutation p-value limited to n <= 10")
        target = abs(rho) - 1e-12
        count = 0
        total = 0
        for perm in itertools.permutations(range(n)):
            total += 1
            if abs(_rank_corr(rx, ry[list(perm)])) >= target:
                count += 1
        return rho, count / total
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class Lexicon:
    categories: dict  # name -> tuple of lowercase patterns, '*' = prefix

    def __post_init__(self):
        if not self.categories:
            raise ValueError("lexicon has no categories")
        for name, patterns in self.categories.items():
            if not patterns:
                raise ValueError(f"lexicon category {name!r} is empty")
            for pat in patterns:
                base = pat[:-1] if pat.endswith("*") else pat
                if not base:
                    raise ValueError(f"empty pattern in category {name!r}")
                if "*" in base:
                    raise ValueError(f"'*' is only allowed trailing: {pat!r}")


def parse_lexicon(text: str) -> Lexicon:
    """Parse the block format: a [CategoryName] header line, then one
    lowercase pattern per line; '#' lines are comments."""
    categories: dict = {}
    current: str | None = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ValueError(f"line {lineno}: empty category name")
            categories.setdefault(current, [])
            continue
        if current is None:
            raise ValueError(f"line {lineno}: pattern before any [Category] header")
        categories[current].append(line.lower())
    return Lexicon(categories={k: tuple(v) for k, v in categories.items()})


def load_lexicon(path) -> Lexicon:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"))


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class _CategoryMatcher:
    def __init__(self, patterns):
        self.exact = frozenset(p for p in patterns if not p.endswith("*"))
        self.prefixes = tuple(p[:-1] for p in patterns if p.endswith("*"))

    def matches(self, token: str) -> bool:
        if token in self.exact:
            return True
        return any(token.startswith(pre) for pre in self.prefixes)


@dataclass
class CategoryCurve:
    """Per-length hit frequency and enrichment for one lexicon category.

    freq[l] is the fraction of length-l tweets containing a match (nan
    where no tweets of that length exist); enrichment[l] = freq[l]
    divided by the category's overall frequency across all lengths.
    """
    freq: np.ndarray
    enrichment: np.ndarray
    tweets_per_length: np.ndarray
    matched_per_length: np.ndarray
    overall: float


def category_curves(records, lexicon: Lexicon, config: CountingConfig,
                    max_len: int | None = None) -> dict:
    """Scan records once, tallying lexicon hits by weighted length."""
    if max_len is None:
        max_len = config.max_weighted_length
    matchers = {name: _CategoryMatcher(patterns)
                for name, patterns in lexicon.categories.items()}
    totals = np.zeros(max_len + 1, dtype=np.int64)
    hits = {name: np.zeros(max_len + 1, dtype=np.int64) for name in matchers}

    for record in records:
        text = normalize_text(extract_display_text(record),
                              config.normalization_form)
        length = weighted_length(text, config)
        if not 1 <= length <= max_len:
            continue
        totals[length] += 1
        tokens = tokenize(text)
        for name, matcher in matchers.items():
            if any(matcher.matches(tok) for tok in tokens):
                hits[name][length] += 1

    n_total = int(totals.sum())
    curves = {}
    nonzero = totals > 0
    for name, matched in hits.items():
        freq = np.full(max_len + 1, np.nan)
        freq[nonzero] = matched[nonzero] / totals[nonzero]
        overall = float(matched.sum()) / n_total if n_total else float("nan")
        enrichment = freq / overall if overall and overall > 0 else np.full_like(freq, np.nan)
        curves[name] = CategoryCurve(freq=freq, enrichment=enrichment,
                                     tweets_per_length=totals.copy(),
                                     matched_per_length=matched,
                                     overall=overall)
    return curves
