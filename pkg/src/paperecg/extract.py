"""Lead separation, column tracing, and pixel-to-physical calibration."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .raster import BinaryImage

SPEED_MM_S = 25.0
GAIN_MM_MV = 10.0
BIG_SQUARE_MM = 5.0
TRAILING_THRESHOLD = 200


@dataclass(frozen=True, eq=False)
class RowProfile:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def __len__(self):
        return len(self.counts)


@dataclass(eq=False)
class LeadTrace:
    lead: str
    columns: np.ndarray          # mean foreground row per column, fractional
    gap: np.ndarray              # True where the column had no foreground
    crop: tuple = (0, 0, 0, 0)   # (x, y, w, h) in sheet coordinates

    @property
    def width(self) -> int:
        return len(self.columns)


@dataclass(eq=False)
class TimeSeries:
    lead: str
    dt: float
    values: np.ndarray
    gap: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.gap is None:
            self.gap = np.zeros(len(self.values), dtype=bool)
        self.gap = np.asarray(self.gap, dtype=bool)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series values must be finite")
        if self.gap.shape != self.values.shape:
            raise ValueError("gap mask length must match values")

    def __len__(self):
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt


def row_profile(img: BinaryImage) -> RowProfile:
    return RowProfile(img.pixels.sum(axis=1, dtype=np.int64))


def default_min_distance(height: int, divisor: int = 20) -> int:
    return max(1, height // divisor)


def find_strip_peaks(profile: RowProfile, min_distance: int) -> list[int]:
    """Row maxima, tallest first, each at least ``min_distance`` rows from any kept one."""
    if min_distance < 1:
        raise ValueError("min_distance must be >= 1")
    c = np.asarray(profile.counts, dtype=np.float64)
    if c.size < 3 or not c.any():
        return []
    peaks, _ = find_peaks(c, height=1, distance=min_distance)
    return sorted(int(p) for p in peaks)


def _median_row(rows: np.ndarray) -> int:
    # lower median keeps the cut on an actual minimum row
    return int(rows[(len(rows) - 1) // 2])


def cut_points(profile: RowProfile, peaks: list[int], trailing_threshold: int = TRAILING_THRESHOLD) -> list[int]:
    """Rows at which to split the sheet into strips.

    Between consecutive peaks the cut is the median of the rows attaining the
    interval minimum. Below the last peak the same rule picks a candidate row;
    if more than ``trailing_threshold`` pixels lie beyond it, another signal
    sits there and the candidate becomes a cut too.
    """
    c = np.asarray(profile.counts)
    cuts = []
    for a, b in zip(peaks, peaks[1:]):
        seg = c[a:b + 1]
        rows = np.flatnonzero(seg == seg.min()) + a
        cuts.append(_median_row(rows))
    if peaks and peaks[-1] + 1 < len(c):
        tail = c[peaks[-1] + 1:]
        rows = np.flatnonzero(tail == tail.min()) + peaks[-1] + 1
        g = _median_row(rows)
        if int(c[g + 1:].sum()) > trailing_threshold:
            cuts.append(g)
    out = []
    for x in cuts:
        if 0 < x < len(c) and (not out or x > out[-1]):
            out.append(int(x))
    return out


def strips_from_cuts(height: int, cuts: list[int]) -> list[tuple[int, int]]:
    """Half-open row ranges tiling ``[0, height)``."""
    edges = [0] + list(cuts) + [height]
    return [(a, b) for a, b in zip(edges, edges[1:]) if b > a]


def segment_strips(img: BinaryImage, min_distance: int | None = None,
                   trailing_threshold: int = TRAILING_THRESHOLD) -> list[tuple[int, int]]:
    prof = row_profile(img)
    md = default_min_distance(img.height) if min_distance is None else min_distance
    return strips_from_cuts(img.height, cut_points(prof, find_strip_peaks(prof, md), trailing_threshold))


def crop_type1_leads(img: BinaryImage, table) -> list[tuple[str, BinaryImage]]:
    out = []
    for lead, (x, y, w, h) in table:
        if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > img.width or y + h > img.height:
            raise ValueError(f"lookup rectangle for lead {lead} lies outside the {img.width}x{img.height} sheet")
        out.append((lead, img.crop(x, y, w, h)))
    return out


def trace_columns(strip: BinaryImage, lead: str = "", crop: tuple | None = None) -> LeadTrace:
    """Mean foreground row per column; empty columns are bridged linearly and flagged."""
    p = strip.pixels
    n = p.sum(axis=0, dtype=np.int64)
    if not n.any():
        raise ValueError("empty strip")
    rows = np.arange(strip.height, dtype=np.float64)
    s = rows @ p.astype(np.float64)
    gap = n == 0
    cols = np.zeros(strip.width)
    cols[~gap] = s[~gap] / n[~gap]
    if gap.any():
        idx = np.arange(strip.width)
        cols[gap] = np.interp(idx[gap], idx[~gap], cols[~gap])
    if crop is None:
        crop = (0, 0, strip.width, strip.height)
    return LeadTrace(lead, cols, gap, tuple(int(v) for v in crop))


def calibrate(trace: LeadTrace, px_per_big_square: float, speed: float = SPEED_MM_S,
              gain: float = GAIN_MM_MV) -> TimeSeries:
    """Pixels to seconds and millivolts; zero volts is the median non-gap row."""
    if not px_per_big_square > 0:
        raise ValueError("px_per_big_square must be positive")
    if not speed > 0 or not gain > 0:
        raise ValueError("speed and gain must be positive")
    mm_per_px = BIG_SQUARE_MM / px_per_big_square
    good = trace.columns[~trace.gap]
    baseline = float(np.median(good)) if good.size else float(np.median(trace.columns))
    v = (baseline - trace.columns) * mm_per_px / gain
    return TimeSeries(trace.lead, mm_per_px / speed, v, trace.gap.copy(),
                      {"baseline_row": baseline, "crop": list(trace.crop),
                       "px_per_big_square": px_per_big_square, "speed_mm_s": speed, "gain_mm_mv": gain})


# --- files ---------------------------------------------------------------

CSV_HEADER = ("time_s", "voltage_mV", "gap")


def series_csv(ts: TimeSeries) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for i, (v, g) in enumerate(zip(ts.values.tolist(), ts.gap.tolist())):
        buf.write(f"{i * ts.dt:.9g},{v:.9g},{int(g)}\n")
    return buf.getvalue()


def parse_series_csv(text: str, lead: str = "") -> TimeSeries:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(h.strip() for h in rows[0]) != CSV_HEADER:
        raise ValueError("line 1: expected header time_s,voltage_mV,gap")
    t, v, g = [], [], []
    for ln, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        if len(r) != 3:
            raise ValueError(f"line {ln}: expected 3 fields, got {len(r)}")
        try:
            t.append(float(r[0]))
            v.append(float(r[1]))
            g.append(int(r[2]) != 0)
        except ValueError as exc:
            raise ValueError(f"line {ln}: {exc}") from None
    if len(t) < 2:
        raise ValueError("series needs at least two samples")
    dt = (t[-1] - t[0]) / (len(t) - 1)
    return TimeSeries(lead, dt, np.array(v), np.array(g))


def sidecar_json(ts: TimeSeries, sheet_type: str, provenance: list) -> str:
    doc = {
        "lead": ts.lead,
        "dt": ts.dt,
        "n_samples": len(ts),
        "sheet_type": sheet_type,
        "meta": ts.meta,
        "provenance": provenance,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
