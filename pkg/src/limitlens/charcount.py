"""Weighted tweet-length counting.

Text is put into canonical-composition normal form, then each code
point weighs 1 if it falls inside one of the configured "light" ranges
and the default weight otherwise. Two built-in configurations cover the
counting eras around the limit doubling:

* ``pre2017``  -- every code point weighs 1, limit 140.
* ``post2017`` -- default weight 2, weight-1 ranges U+0000-U+10FF,
  U+2000-U+200D, U+2010-U+201F and U+2032-U+2037, limit 280. Under
  these rules CJK glyphs count two units and most Latin text counts
  one, so a pure-CJK tweet still fits at most 140 glyphs.

The per-code-point loop is served by a compiled extension when built,
with a pure-Python fallback selected at import time.
"""

from __future__ import annotations

import os
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

if os.environ.get("LIMITLENS_PURE_PYTHON"):
    from . import _pykernels as _kernels
else:
    try:
        from . import _ckernels as _kernels
    except ImportError:  # extension not built
        from . import _pykernels as _kernels

KERNEL_BACKEND = _kernels.BACKEND


class MalformedRecordError(ValueError):
    """A record's display range is inconsistent with its text."""


@dataclass(frozen=True)
class CountingConfig:
    """Weight table plus the enforced limit, in weighted units."""

    name: str
    normalization_form: str = "NFC"
    default_weight: int = 1
    light_ranges: tuple[tuple[int, int], ...] = ()
    max_weighted_length: int = 140

    def __post_init__(self):
        if self.default_weight not in (1, 2):
            raise ValueError(f"default_weight must be 1 or 2, got {self.default_weight}")
        if self.max_weighted_length <= 0:
            raise ValueError("max_weighted_length must be positive")
        prev_end = -1
        for lo, hi in self.light_ranges:
            if lo > hi:
                raise ValueError(f"invalid light range {lo:#x}-{hi:#x}")
            if lo <= prev_end:
                raise ValueError("light_ranges must be sorted and non-overlapping")
            prev_end = hi


PRE2017 = CountingConfig(name="pre2017", default_weight=1, light_ranges=(),
                         max_weighted_length=140)

POST2017 = CountingConfig(
    name="post2017",
    default_weight=2,
    light_ranges=(
        (0x0000, 0x10FF),
        (0x2000, 0x200D),
        (0x2010, 0x201F),
        (0x2032, 0x2037),
    ),
    max_weighted_length=280,
)

BUILTIN_CONFIGS = {"pre2017": PRE2017, "post2017": POST2017}


@lru_cache(maxsize=32)
def _table(config: CountingConfig):
    return _kernels.build_table(config.light_ranges, config.default_weight)


def normalize_text(raw, form: str = "NFC") -> str:
    """Decode (if bytes) and canonically compose the text.

    Invalid UTF-8 raises UnicodeDecodeError, which names the offending
    byte offset. Idempotent on already-normalized input.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    return unicodedata.normalize(form, raw)


def weighted_length(text: str, config: CountingConfig) -> int:
    """Sum of per-code-point weights; expects normalized text."""
    return _kernels.weighted_length(text, _table(config))


def weighted_lengths(texts, config: CountingConfig):
    """Batch variant returning an int64 array (benchmark/bulk path)."""
    return _kernels.weighted_lengths(list(texts), _table(config))


def extract_display_text(record) -> str:
    """Slice the countable span out of a record's text.

    The display range is interpreted in code points, [start, end).
    Records without a range are counted over the full text.
    """
    text = record.text
    rng = record.display_range
    if rng is None:
        return text
    start, end = rng
    if start > end or start < 0 or end > len(text):
        raise MalformedRecordError(
            f"display range [{start}, {end}) out of bounds for text of "
            f"{len(text)} code points")
    return text[start:end]


def _parse_ranges(value: str) -> tuple[tuple[int, int], ...]:
    ranges = []
    for part in value.replace(",", " ").split():
        lo, sep, hi = part.partition("-")
        if not sep:
            hi = lo
        ranges.append((int(lo, 16), int(hi, 16)))
    return tuple(ranges)


def load_counting_config(path) -> CountingConfig:
    """Read a counting config from a plain key/value file.

    Recognized keys: ``normalization``, ``default_weight``,
    ``light_ranges`` (hex ranges like ``0000-10FF``, comma or space
    separated) and ``limit``. Lines starting with ``#`` are comments.
    """
    path = Path(path)
    fields: dict = {"name": path.stem}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        if key == "normalization":
            fields["normalization_form"] = value
        elif key == "default_weight":
            fields["default_weight"] = int(value)
        elif key == "light_ranges":
            fields["light_ranges"] = _parse_ranges(value)
        elif key == "limit":
            fields["max_weighted_length"] = int(value)
        elif key == "name":
            fields["name"] = value
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return CountingConfig(**fields)


def resolve_counting_config(spec: str) -> CountingConfig:
    """Map a CLI argument to a config: built-in name or file path."""
    if spec in BUILTIN_CONFIGS:
        return BUILTIN_CONFIGS[spec]
    if Path(spec).exists():
        return load_counting_config(spec)
    raise ValueError(
        f"unknown counting config {spec!r}; expected one of "
        f"{sorted(BUILTIN_CONFIGS)} or a config file path")
