"""Report emission: series CSV/JSON plus a minimal static SVG renderer.

Every artifact carries a metadata preamble (tool version, seed, config
hash) and is byte-reproducible: no timestamps, fixed float formatting.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from datetime import date, timedelta
from pathlib import Path

from . import __version__
from .analytics import DailySeries, SeriesPoint


def config_hash(obj) -> str:
    """Short stable hash of any JSON-representable configuration."""
    canon = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def standard_meta(seed=None, config=None, **extra) -> dict:
    meta = {"tool_version": __version__}
    if seed is not None:
        meta["seed"] = seed
    if config is not None:
        meta["config_hash"] = config_hash(config)
    meta.update(extra)
    return meta


def _preamble(meta: dict) -> str:
    return "".join(f"# {key}: {meta[key]}\n" for key in sorted(meta))


def series_csv_text(series: DailySeries, meta: dict,
                    rolling: DailySeries | None = None) -> str:
    """day,value[,rolling] rows; gap days are omitted entirely."""
    buf = io.StringIO()
    buf.write(_preamble({**meta, "quantity": series.quantity}))
    writer = csv.writer(buf, lineterminator="\n")
    if rolling is not None:
        rolling_by_day = {p.day: p.value for p in rolling.points}
        writer.writerow(["day", "value", "rolling"])
        for p in series.points:
            writer.writerow([p.day.isoformat(), repr(p.value),
                             repr(rolling_by_day[p.day])])
    else:
        writer.writerow(["day", "value"])
        for p in series.points:
            writer.writerow([p.day.isoformat(), repr(p.value)])
    return buf.getvalue()


def write_series_csv(series: DailySeries, path, meta: dict,
                     rolling: DailySeries | None = None):
    Path(path).write_text(series_csv_text(series, meta, rolling),
                          encoding="utf-8")


def read_series_csv(path) -> DailySeries:
    meta = {}
    points = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        header = None
        while True:
            line = f.readline()
            if not line:
                break
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition(":")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            header = line.rstrip("\r\n").split(",")
            break
        if header is None or header[:2] != ["day", "value"]:
            raise ValueError(f"{path}: not a series CSV")
        for row in csv.reader(f):
            if not row:
                continue
            points.append(SeriesPoint(day=date.fromisoformat(row[0]),
                                      value=float(row[1])))
    return DailySeries(quantity=meta.get("quantity", "series"), points=points)


def write_json(payload: dict, path, meta: dict):
    doc = {"meta": dict(sorted(meta.items())), **payload}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


# --- SVG -------------------------------------------------------------

_W, _H = 900, 320
_ML, _MR, _MT, _MB = 60, 15, 15, 40
_COLORS = ("#1f6fb4", "#d95f02", "#2a9d50", "#7a4fa3")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _gap_runs(series_list):
    """Runs of calendar days where no series has a point."""
    present = set()
    lo = hi = None
    for series in series_list:
        for p in series.points:
            present.add(p.day)
            lo = p.day if lo is None or p.day < lo else lo
            hi = p.day if hi is None or p.day > hi else hi
    if lo is None:
        return [], None, None
    runs = []
    day, start = lo, None
    while day <= hi:
        if day not in present:
            start = start or day
        elif start is not None:
            runs.append((start, day - timedelta(days=1)))
            start = None
        day += timedelta(days=1)
    if start is not None:
        runs.append((start, hi))
    return runs, lo, hi


def render_series_svg(series_list, path, title: str = "", ylabel: str = ""):
    """Line chart: daily circles + line per series, gray bands on gaps.

    Deliberately minimal; consumers are humans skimming a static report.
    """
    named = [(s.quantity, s) for s in series_list]
    runs, lo, hi = _gap_runs([s for _, s in named])
    if lo is None:
        raise ValueError("nothing to plot: all series are empty")
    span = max((hi - lo).days, 1)
    values = [v for _, s in named for v in s.values()]
    vmin, vmax = min(values), max(values)
    if vmax <= vmin:
        vmax = vmin + 1.0
    pad = 0.05 * (vmax - vmin)
    vmin, vmax = vmin - pad, vmax + pad

    def x(day: date) -> float:
        return _ML + (_W - _ML - _MR) * (day - lo).days / span

    def y(value: float) -> float:
        return _H - _MB - (_H - _MT - _MB) * (value - vmin) / (vmax - vmin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">']
    parts.append(f'<rect width="{_W}" height="{_H}" fill="white"/>')
    for start, end in runs:
        x0, x1 = x(start), x(end + timedelta(days=1))
        parts.append(f'<rect x="{_fmt(x0)}" y="{_MT}" width="{_fmt(x1 - x0)}" '
                     f'height="{_H - _MT - _MB}" fill="#dddddd"/>')
    # axes
    parts.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
                 'stroke="black"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
                 'stroke="black"/>')
    for i in range(5):
        v = vmin + (vmax - vmin) * i / 4
        yy = y(v)
        parts.append(f'<line x1="{_ML - 4}" y1="{_fmt(yy)}" x2="{_ML}" y2="{_fmt(yy)}" '
                     'stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{_fmt(yy + 4)}" text-anchor="end">'
                     f'{v:.4g}</text>')
    n_xticks = min(6, span + 1)
    for i in range(n_xticks):
        day = lo + timedelta(days=round(span * i / max(n_xticks - 1, 1)))
        xx = x(day)
        parts.append(f'<line x1="{_fmt(xx)}" y1="{_H - _MB}" x2="{_fmt(xx)}" '
                     f'y2="{_H - _MB + 4}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(xx)}" y="{_H - _MB + 18}" text-anchor="middle">'
                     f'{day.isoformat()}</text>')
    if title:
        parts.append(f'<text x="{_ML}" y="{_MT - 2}" font-size="13">{title}</text>')
    if ylabel:
        parts.append(f'<text x="14" y="{_MT + 10}" font-size="11" '
                     f'transform="rotate(-90 14 {_MT + 10})" text-anchor="end">'
                     f'{ylabel}</text>')

    for idx, (label, series) in enumerate(named):
        color = _COLORS[idx % len(_COLORS)]
        pts = [(x(p.day), y(p.value)) for p in series.points]
        if len(pts) > 1:
            coords = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}" stroke-width="1.2"/>')
        for a, b in pts:
            parts.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="1.6" '
                         f'fill="{color}" fill-opacity="0.5"/>')
        parts.append(f'<text x="{_W - _MR - 4}" y="{_MT + 14 + 14 * idx}" '
                     f'text-anchor="end" fill="{color}">{label}</text>')

    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
