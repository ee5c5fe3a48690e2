"""Per-cohort length histograms and their CSV persistence.

A cohort is one (day, language, device) cell; its histogram counts
tweets by weighted length 1..max_len (index 0 is unused, empty tweets
are excluded upstream). The store is a single sparse CSV table
``day,lang,device,length,count``, sorted, with a ``#`` metadata
preamble; days with no kept tweets are simply absent.
"""

from __future__ import annotations

import csv
import gzip
import io
import os
import tempfile
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

DEFAULT_MAX_LEN = 280
FORMAT_TAG = "limitlens-hist-v1"


@dataclass
class LengthHistogram:
    counts: np.ndarray  # int64, shape (max_len + 1,), counts[0] unused

    @classmethod
    def zeros(cls, max_len: int = DEFAULT_MAX_LEN) -> "LengthHistogram":
        return cls(np.zeros(max_len + 1, dtype=np.int64))

    @property
    def max_len(self) -> int:
        return len(self.counts) - 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def density(self) -> np.ndarray:
        t = self.total
        if t == 0:
            raise ValueError("density undefined for an empty histogram")
        return self.counts / t

    def add(self, length: int, count: int = 1):
        self.counts[length] += count


def merge(a: LengthHistogram, b: LengthHistogram) -> LengthHistogram:
    """Element-wise sum; commutative and associative, zero is identity."""
    if a.max_len != b.max_len:
        raise ValueError(f"histogram size mismatch: {a.max_len} != {b.max_len}")
    return LengthHistogram(a.counts + b.counts)


def fraction_exceeding(h: LengthHistogram, c: int) -> float:
    """Fraction of tweets strictly longer than c weighted units."""
    t = h.total
    if t == 0:
        raise ValueError("fraction undefined for an empty histogram")
    if c >= h.max_len:
        return 0.0
    if c < 0:
        return 1.0
    return float(h.counts[c + 1:].sum()) / t


@dataclass
class HistStore:
    """In-memory cohort map with sorted-CSV save/load."""

    max_len: int = DEFAULT_MAX_LEN
    meta: dict = field(default_factory=dict)
    cohorts: dict = field(default_factory=dict)  # (date, lang, device) -> int64 array

    def _bucket(self, day: date, lang: str, device: str) -> np.ndarray:
        key = (day, lang, device)
        arr = self.cohorts.get(key)
        if arr is None:
            arr = np.zeros(self.max_len + 1, dtype=np.int64)
            self.cohorts[key] = arr
        return arr

    def add(self, day: date, lang: str, device: str, length: int, count: int = 1):
        self._bucket(day, lang, device)[length] += count

    def add_counts(self, day: date, lang: str, device: str, counts: np.ndarray):
        if len(counts) != self.max_len + 1:
            raise ValueError(f"cohort array size mismatch: {len(counts)} != {self.max_len + 1}")
        self._bucket(day, lang, device)[:] += counts

    def merge_store(self, other: "HistStore"):
        if other.max_len != self.max_len:
            raise ValueError(f"store size mismatch: {other.max_len} != {self.max_len}")
        for (day, lang, device), counts in other.cohorts.items():
            self._bucket(day, lang, device)[:] += counts

    def days(self) -> list[date]:
        return sorted({k[0] for k in self.cohorts})

    def langs(self) -> list[str]:
        return sorted({k[1] for k in self.cohorts})

    def query(self, day_range=None, langs=None, devices=None) -> LengthHistogram:
        """Merged histogram over matching cohorts; empty match is a zero histogram."""
        langs = set(langs) if langs is not None else None
        devices = set(devices) if devices is not None else None
        out = np.zeros(self.max_len + 1, dtype=np.int64)
        for (day, lang, device), counts in self.cohorts.items():
            if day_range is not None and not day_range[0] <= day <= day_range[1]:
                continue
            if langs is not None and lang not in langs:
                continue
            if devices is not None and device not in devices:
                continue
            out += counts
        return LengthHistogram(out)

    def save(self, path):
        """Write sorted sparse CSV (gzip if the suffix says so), atomically."""
        path = Path(path)
        buf = io.StringIO()
        buf.write(f"# {FORMAT_TAG}\n")
        buf.write(f"# max_len: {self.max_len}\n")
        for key in sorted(self.meta):
            buf.write(f"# {key}: {self.meta[key]}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["day", "lang", "device", "length", "count"])
        for (day, lang, device) in sorted(self.cohorts):
            counts = self.cohorts[(day, lang, device)]
            for length in np.flatnonzero(counts):
                writer.writerow([day.isoformat(), lang, device,
                                 int(length), int(counts[length])])
        data = buf.getvalue().encode("utf-8")
        if path.suffix == ".gz":
            # mtime=0 keeps the compressed bytes reproducible
            data = gzip.compress(data, mtime=0)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path) -> "HistStore":
        path = Path(path)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "rt", encoding="utf-8", newline="") as f:
            meta = {}
            header = None
            while True:
                line = f.readline()
                if not line:
                    break
                if line.startswith("#"):
                    text = line[1:].strip()
                    key, sep, value = text.partition(":")
                    if sep:
                        meta[key.strip()] = value.strip()
                    continue
                header = line.rstrip("\r\n").split(",")
                break
            if header != ["day", "lang", "device", "length", "count"]:
                raise ValueError(f"{path}: not a histogram store (header {header!r})")
            max_len = int(meta.pop("max_len", DEFAULT_MAX_LEN))
            store = cls(max_len=max_len, meta=meta)
            for row in csv.reader(f):
                if not row:
                    continue
                day, lang, device, length, count = row
                store.add(date.fromisoformat(day), lang, device,
                          int(length), int(count))
        return store


def query(store: HistStore, day_range=None, langs=None, devices=None) -> LengthHistogram:
    return store.query(day_range=day_range, langs=langs, devices=devices)
