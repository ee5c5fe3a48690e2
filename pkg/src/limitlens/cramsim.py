"""Generative simulator of tweet writing and editing under a length limit.

Each draft draws an intended length from a rounded log-normal. Drafts at
or under the limit are posted as-is. An over-limit draft enters editing
rounds: with probability 1-p the author abandons it; otherwise they
delete ceil(alpha * excess) characters, and if the result now fits it
is a valid sentence with probability q and gets posted, else another
round begins (an under-limit but invalid draft is reworked at constant
length). After max_rounds the draft counts as abandoned.

The emitted histogram is the ground-truth oracle for the length model:
with p*q > 0 the editing process piles excess mass at the limit exactly
like empirical cramming.

Randomness is consumed in fixed-size sub-streams with seeds derived
from (seed, stream index), so results are bit-identical for a given
seed regardless of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .histstore import LengthHistogram
from .normal import norm_sf

STREAM_CHUNK = 1 << 18
_LENGTH_CAP = 1e15  # guards int64 conversion against absurd draws


@dataclass(frozen=True)
class SimConfig:
    mu: float
    sigma: float
    limit: int
    p: float
    q: float
    alpha: float = 1.0
    max_rounds: int = 20
    seed: int = 0
    jitter_alpha: bool = False  # scale deletions by U[0.8, 1.2)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.q <= 1.0:
            raise ValueError("p and q must lie in [0, 1]")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.limit < 1:
            raise ValueError("limit must be >= 1")


@dataclass
class SimResult:
    histogram: LengthHistogram
    n_drawn: int
    n_emitted: int
    n_abandoned: int
    n_edited_emitted: int  # emitted drafts whose intended length exceeded the limit
    true_runover: float    # analytic 1 - F(limit) of the intended distribution

    def to_dict(self) -> dict:
        return {
            "n_drawn": self.n_drawn,
            "n_emitted": self.n_emitted,
            "n_abandoned": self.n_abandoned,
            "n_edited_emitted": self.n_edited_emitted,
            "cramming_fraction": (self.n_edited_emitted / self.n_emitted
                                  if self.n_emitted else 0.0),
            "true_runover": self.true_runover,
        }


def _stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(stream,)))


def draw_intended_length(mu: float, sigma: float, rng: np.random.Generator) -> int:
    """round(exp(N(mu, sigma^2))), clamped to >= 1."""
    y = math.exp(rng.normal(mu, sigma))
    return max(int(np.rint(min(y, _LENGTH_CAP))), 1)


def draw_intended_lengths(mu: float, sigma: float, n: int,
                          rng: np.random.Generator) -> np.ndarray:
    y = np.exp(rng.normal(mu, sigma, n))
    lengths = np.rint(np.minimum(y, _LENGTH_CAP)).astype(np.int64)
    np.maximum(lengths, 1, out=lengths)
    return lengths


def _deletion(excess: np.ndarray, cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    scale = cfg.alpha
    if cfg.jitter_alpha and excess.size:
        scale = cfg.alpha * rng.uniform(0.8, 1.2, excess.size)
    return np.ceil(scale * excess).astype(np.int64)


def edit_round(x: int, cfg: SimConfig, rng: np.random.Generator):
    """One editing round; returns (status, length) with status in
    {"emitted", "abandoned", "continue"}.

    Defined for any current draft length: deletion applies only to the
    over-limit part, so an under-limit draft awaiting a valid phrasing
    keeps its length until it is posted or abandoned.
    """
    if rng.random() >= cfg.p:
        return ("abandoned", None)
    excess = x - cfg.limit
    if excess > 0:
        x = x - int(_deletion(np.array([excess]), cfg, rng)[0])
    if x <= cfg.limit and rng.random() < cfg.q:
        return ("emitted", max(x, 1))
    return ("continue", x)


def _simulate_stream(cfg: SimConfig, stream: int, count: int):
    rng = _stream_rng(cfg.seed, stream)
    lengths = draw_intended_lengths(cfg.mu, cfg.sigma, count, rng)

    hist = np.zeros(cfg.limit + 1, dtype=np.int64)
    under = lengths <= cfg.limit
    hist += np.bincount(lengths[under], minlength=cfg.limit + 1)
    n_emitted = int(under.sum())
    n_edited_emitted = 0
    n_abandoned = 0

    active = lengths[~under]
    for _ in range(cfg.max_rounds):
        if active.size == 0:
            break
        survive = rng.random(active.size) < cfg.p
        n_abandoned += int(active.size - survive.sum())
        cur = active[survive].copy()
        over = cur > cfg.limit
        if over.any():
            cur[over] -= _deletion(cur[over] - cfg.limit, cfg, rng)
        fits = cur <= cfg.limit
        emitted = np.zeros(cur.size, dtype=bool)
        emitted[fits] = rng.random(int(fits.sum())) < cfg.q
        out = np.maximum(cur[emitted], 1)
        hist += np.bincount(out, minlength=cfg.limit + 1)
        n_emitted += out.size
        n_edited_emitted += out.size
        active = cur[~emitted]
    n_abandoned += int(active.size)

    return hist, n_emitted, n_abandoned, n_edited_emitted


def _simulate_stream_star(args):
    return _simulate_stream(*args)


def simulate(cfg: SimConfig, n: int, workers: int = 1) -> SimResult:
    """Run n independent draw/edit pipelines.

    Work is split into fixed STREAM_CHUNK-sized sub-streams so the
    result depends only on cfg.seed, never on worker count.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    tasks = []
    offset = 0
    stream = 0
    while offset < n:
        count = min(STREAM_CHUNK, n - offset)
        tasks.append((cfg, stream, count))
        offset += count
        stream += 1

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_stream_star, tasks))
    else:
        parts = [_simulate_stream(*t) for t in tasks]

    hist = np.zeros(cfg.limit + 1, dtype=np.int64)
    n_emitted = n_abandoned = n_edited_emitted = 0
    for part_hist, emitted, abandoned, edited in parts:
        hist += part_hist
        n_emitted += emitted
        n_abandoned += abandoned
        n_edited_emitted += edited

    true_runover = norm_sf((math.log(cfg.limit) - cfg.mu) / cfg.sigma)
    return SimResult(histogram=LengthHistogram(hist), n_drawn=n,
                     n_emitted=n_emitted, n_abandoned=n_abandoned,
                     n_edited_emitted=n_edited_emitted,
                     true_runover=true_runover)
