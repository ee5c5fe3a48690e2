"""Archive ingestion: stream shards, parse tweet objects, filter, count.

Accepts newline-delimited JSON shards, optionally gzip/bzip2-compressed,
plus directories and tar archives of such shards. Parsing never aborts
on a bad line; every skipped or dropped record is tallied by reason and
the totals reconcile exactly with the line count.

Records are binned into per-(day, language, device) length histograms
using the counting rules of the era the tweet was posted in.
"""

from __future__ import annotations

import bz2
import gzip
import json
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np

from .charcount import (
    CountingConfig, MalformedRecordError, PRE2017, POST2017,
    extract_display_text, normalize_text, weighted_length,
)
from .histstore import HistStore

WEB = "web"
MOBILE = "mobile"
EXCLUDED = "excluded"

DEFAULT_SWITCH_DAY = date(2017, 11, 7)

# Weighted lengths above limit * ANOMALY_FACTOR are counting anomalies
# (tallied, never clamped into the histogram).
ANOMALY_FACTOR = 1.1

# Store sized to hold legitimate over-limit rows up to the anomaly bound.
STORE_MAX_LEN = int(280 * ANOMALY_FACTOR)

_SOURCE_LABEL_RE = re.compile(r">([^<]*)</a>")
_CREATED_AT_FORMAT = "%a %b %d %H:%M:%S %z %Y"


@dataclass(frozen=True)
class TweetRecord:
    id: int
    created_at: datetime
    text: str
    display_range: tuple[int, int] | None
    lang: str
    source_label: str
    is_retweet: bool = False
    is_delete_event: bool = False


@dataclass(frozen=True)
class Skip:
    reason: str  # delete_event | retweet | unparseable | missing_fields


@dataclass(frozen=True)
class Keep:
    device: str


@dataclass(frozen=True)
class Drop:
    reason: str  # source | language | date | empty | counting_anomaly


@dataclass(frozen=True)
class FilterConfig:
    treated_languages: frozenset
    control_languages: frozenset
    web_sources: frozenset
    mobile_sources: frozenset
    date_start: date
    date_end: date
    switch_day: date = DEFAULT_SWITCH_DAY

    def __post_init__(self):
        for name in ("treated_languages", "control_languages",
                     "web_sources", "mobile_sources"):
            if not getattr(self, name):
                raise ValueError(f"filter config: {name} must be non-empty")
        if self.date_start > self.date_end:
            raise ValueError("filter config: date_start after date_end")

    @property
    def languages(self) -> frozenset:
        return self.treated_languages | self.control_languages

    @property
    def allowed_sources(self) -> frozenset:
        return self.web_sources | self.mobile_sources


_DEFAULT_FILTERS = None


def default_filters() -> FilterConfig:
    """The shipped editable filter config (23 languages, official clients)."""
    global _DEFAULT_FILTERS
    if _DEFAULT_FILTERS is None:
        _DEFAULT_FILTERS = load_filter_config(
            Path(__file__).parent / "data" / "filters.cfg")
    return _DEFAULT_FILTERS


def _split_list(value: str) -> frozenset:
    return frozenset(part.strip() for part in value.split(",") if part.strip())


def load_filter_config(path) -> FilterConfig:
    path = Path(path)
    fields: dict = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        if key in ("treated_languages", "control_languages",
                   "web_sources", "mobile_sources"):
            fields[key] = _split_list(value)
        elif key in ("date_start", "date_end", "switch_day"):
            fields[key] = date.fromisoformat(value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return FilterConfig(**fields)


def extract_source_label(source: str) -> str:
    """Client name from the source markup (text between anchor tags)."""
    m = _SOURCE_LABEL_RE.search(source)
    return m.group(1).strip() if m else source.strip()


def parse_created_at(value: str) -> datetime:
    try:
        dt = datetime.strptime(value, _CREATED_AT_FORMAT)
    except ValueError:
        dt = datetime.fromisoformat(value)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def parse_record(line):
    """One archive line -> TweetRecord or Skip(reason). Never raises."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError:
            return Skip("unparseable")
    line = line.strip()
    if not line:
        return Skip("unparseable")
    try:
        obj = json.loads(line)
    except ValueError:
        return Skip("unparseable")
    if not isinstance(obj, dict):
        return Skip("unparseable")
    if "delete" in obj:
        return Skip("delete_event")
    if obj.get("retweeted_status") is not None:
        return Skip("retweet")

    extended = obj.get("extended_tweet") or {}
    text = extended.get("full_text", obj.get("text"))
    raw_range = extended.get("display_text_range", obj.get("display_text_range"))

    tweet_id = obj.get("id")
    created = obj.get("created_at")
    lang = obj.get("lang")
    if text is None or tweet_id is None or created is None or not lang:
        return Skip("missing_fields")
    try:
        created_at = parse_created_at(created)
    except ValueError:
        return Skip("missing_fields")

    display_range = None
    if (isinstance(raw_range, (list, tuple)) and len(raw_range) == 2
            and all(isinstance(v, int) for v in raw_range)):
        display_range = (raw_range[0], raw_range[1])

    return TweetRecord(
        id=int(tweet_id),
        created_at=created_at,
        text=str(text),
        display_range=display_range,
        lang=str(lang),
        source_label=extract_source_label(str(obj.get("source", ""))),
    )


def classify_device(source_label: str, config: FilterConfig | None = None) -> str:
    config = config or default_filters()
    if source_label in config.web_sources:
        return WEB
    if source_label in config.mobile_sources:
        return MOBILE
    return EXCLUDED


def filter_record(record: TweetRecord, config: FilterConfig):
    """Apply the inclusion rules; Keep(device) or Drop(reason)."""
    if record.is_delete_event:
        return Drop("delete_event")
    if record.is_retweet:
        return Drop("retweet")
    device = classify_device(record.source_label, config)
    if device == EXCLUDED:
        return Drop("source")
    if record.lang not in config.languages:
        return Drop("language")
    day = record.created_at.date()
    if not config.date_start <= day <= config.date_end:
        return Drop("date")
    return Keep(device)


@dataclass(frozen=True)
class CountingSchedule:
    """Which counting rules apply on a given day."""

    pre: CountingConfig
    post: CountingConfig
    switch_day: date

    def for_day(self, day: date) -> CountingConfig:
        return self.pre if day < self.switch_day else self.post

    @classmethod
    def era(cls, switch_day: date = DEFAULT_SWITCH_DAY) -> "CountingSchedule":
        return cls(pre=PRE2017, post=POST2017, switch_day=switch_day)

    @classmethod
    def fixed(cls, config: CountingConfig) -> "CountingSchedule":
        return cls(pre=config, post=config, switch_day=date.max)


_SHARD_SUFFIXES = (".json", ".jsonl", ".json.gz", ".jsonl.gz",
                   ".json.bz2", ".jsonl.bz2")
_TAR_SUFFIXES = (".tar", ".tar.gz", ".tgz", ".tar.bz2")


def _is_shard(name: str) -> bool:
    return name.endswith(_SHARD_SUFFIXES)


def expand_inputs(paths) -> list[Path]:
    """Resolve files/directories to a sorted list of shard paths."""
    shards: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if not p.exists():
            raise FileNotFoundError(f"input path does not exist: {p}")
        if p.is_dir():
            found = sorted(q for q in p.rglob("*")
                           if q.is_file() and (_is_shard(q.name)
                                               or q.name.endswith(_TAR_SUFFIXES)))
            if not found:
                raise FileNotFoundError(f"no archive shards found under directory: {p}")
            shards.extend(found)
        else:
            shards.append(p)
    return sorted(set(shards))


def iter_shard_lines(path: Path):
    """Yield raw byte lines from one shard (plain, gz, bz2 or tar)."""
    name = path.name
    if name.endswith(_TAR_SUFFIXES):
        import tarfile
        with tarfile.open(path, "r|*") as tf:
            for member in tf:
                if not member.isfile() or not _is_shard(member.name):
                    continue
                handle = tf.extractfile(member)
                if handle is None:
                    continue
                if member.name.endswith(".gz"):
                    handle = gzip.GzipFile(fileobj=handle)
                elif member.name.endswith(".bz2"):
                    handle = bz2.BZ2File(handle)
                yield from handle
        return
    if name.endswith(".gz"):
        opener = gzip.open
    elif name.endswith(".bz2"):
        opener = bz2.open
    else:
        opener = open
    with opener(path, "rb") as f:
        yield from f


@dataclass
class ShardResult:
    path: str
    n_lines: int = 0
    skips: dict = field(default_factory=dict)
    drops: dict = field(default_factory=dict)
    n_kept: int = 0
    cohorts: dict = field(default_factory=dict)  # (date, lang, device) -> int64 array
    error: str | None = None


def _tally(counter: dict, reason: str):
    counter[reason] = counter.get(reason, 0) + 1


def ingest_shard(path, filters: FilterConfig, schedule: CountingSchedule,
                 max_len: int = STORE_MAX_LEN) -> ShardResult:
    """Single-pass, constant-memory scan of one shard."""
    result = ShardResult(path=str(path))
    try:
        for line in iter_shard_lines(Path(path)):
            result.n_lines += 1
            parsed = parse_record(line)
            if isinstance(parsed, Skip):
                _tally(result.skips, parsed.reason)
                continue
            verdict = filter_record(parsed, filters)
            if isinstance(verdict, Drop):
                _tally(result.drops, verdict.reason)
                continue
            day = parsed.created_at.date()
            config = schedule.for_day(day)
            try:
                text = normalize_text(extract_display_text(parsed),
                                      config.normalization_form)
            except MalformedRecordError:
                _tally(result.drops, "malformed_range")
                continue
            length = weighted_length(text, config)
            if length == 0:
                _tally(result.drops, "empty")
                continue
            if length > config.max_weighted_length * ANOMALY_FACTOR or length > max_len:
                _tally(result.drops, "counting_anomaly")
                continue
            key = (day, parsed.lang, verdict.device)
            bucket = result.cohorts.get(key)
            if bucket is None:
                bucket = np.zeros(max_len + 1, dtype=np.int64)
                result.cohorts[key] = bucket
            bucket[length] += 1
            result.n_kept += 1
    except (OSError, EOFError) as exc:
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _ingest_shard_star(args):
    return ingest_shard(*args)


@dataclass
class IngestSummary:
    n_shards: int = 0
    n_lines: int = 0
    n_kept: int = 0
    skips: dict = field(default_factory=dict)
    drops: dict = field(default_factory=dict)
    corrupt_shards: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_shards": self.n_shards,
            "n_lines": self.n_lines,
            "n_kept": self.n_kept,
            "skips": dict(sorted(self.skips.items())),
            "drops": dict(sorted(self.drops.items())),
            "corrupt_shards": list(self.corrupt_shards),
        }


def ingest_paths(inputs, filters: FilterConfig, schedule: CountingSchedule,
                 workers: int = 1, max_len: int = STORE_MAX_LEN,
                 progress=None) -> tuple[HistStore, IngestSummary]:
    """Ingest all shards, merging per-shard results in path order so the
    output is independent of worker count and completion order."""
    shards = expand_inputs(inputs)
    tasks = [(str(s), filters, schedule, max_len) for s in shards]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ingest_shard_star, tasks))
    else:
        results = [ingest_shard(*t) for t in tasks]

    store = HistStore(max_len=max_len)
    summary = IngestSummary(n_shards=len(shards))
    for res in sorted(results, key=lambda r: r.path):
        summary.n_lines += res.n_lines
        summary.n_kept += res.n_kept
        for reason, count in res.skips.items():
            summary.skips[reason] = summary.skips.get(reason, 0) + count
        for reason, count in res.drops.items():
            summary.drops[reason] = summary.drops.get(reason, 0) + count
        if res.error is not None:
            summary.corrupt_shards.append({"path": res.path, "error": res.error})
        for (day, lang, device), counts in res.cohorts.items():
            store.add_counts(day, lang, device, counts)
        if progress is not None:
            progress(res)
    return store, summary
