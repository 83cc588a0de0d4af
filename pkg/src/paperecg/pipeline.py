"""Digitization pipeline: scanned sheet in, calibrated upsampled lead series out."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import contours, edgeline, extract, layout, resample
from .layout import SheetType, TypeProfile
from .raster import BinaryImage, GrayImage, downsample_area, to_grayscale

UPSAMPLE = 8


@dataclass
class LeadResult:
    lead: str
    trace: extract.LeadTrace
    series: extract.TimeSeries          # calibrated, at the column rate
    upsampled: extract.TimeSeries       # after spectral zero-padding


@dataclass
class DigitizeResult:
    sheet_type: SheetType
    angle: float
    no_lines: bool
    leads: list = field(default_factory=list)
    provenance: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    crop_rect: tuple | None = None      # analysis-scale rect of the cropped region

    def lead(self, name: str) -> LeadResult:
        for r in self.leads:
            if r.lead == name:
                return r
        raise KeyError(name)


def _upsample(ts: extract.TimeSeries, L: int) -> extract.TimeSeries:
    if ts.values.size < 2 or L == 1:
        return ts
    v = resample.upsample_zeropad(ts.values, L)
    g = resample.upsample_gaps(ts.gap, L)
    meta = dict(ts.meta, upsample=L, source_dt=ts.dt)
    return extract.TimeSeries(ts.lead, ts.dt / L, v, g, meta)


def _strip_names(profile: TypeProfile, n: int) -> list:
    names = list(profile.strip_leads[:n])
    return names + [f"strip{k + 1}" for k in range(len(names), n)]


def digitize_sheet(image, sheet_type, profile: TypeProfile | None = None,
                   hough: edgeline.HoughConfig | None = None, seed: int = 0,
                   crop_rect=None, upsample: int = UPSAMPLE, deskew: bool = True,
                   min_distance: int | None = None, speed: float = extract.SPEED_MM_S,
                   gain: float = extract.GAIN_MM_MV,
                   trailing_threshold: int = extract.TRAILING_THRESHOLD) -> DigitizeResult:
    """Run every stage on one sheet.

    ``image`` may be RGB or gray at scan resolution. ``crop_rect`` overrides
    automatic frame detection (analysis-scale coordinates).
    """
    st = SheetType.parse(sheet_type)
    profile = profile or layout.profile_for(st)
    hough = hough or edgeline.HoughConfig()
    gray = image if isinstance(image, GrayImage) else to_grayscale(image)
    res = DigitizeResult(st, 0.0, False)
    log = res.provenance
    log.append({"stage": "grayscale", "width": gray.width, "height": gray.height})

    if deskew:
        est = edgeline.estimate_rotation_detail(gray, hough, seed)
        res.angle, res.no_lines = est.angle, est.no_lines
        if est.no_lines:
            res.warnings.append("no Hough lines found; rotation skipped")
        else:
            gray = edgeline.rotate(gray, -est.angle)
        log.append({"stage": "deskew", "angle": est.angle, "segments": est.n_segments,
                    "no_lines": est.no_lines, "hough": hough.to_dict(), "seed": seed})

    small = downsample_area(gray, profile.factor)
    log.append({"stage": "downsample", "factor": profile.factor, "width": small.width, "height": small.height})

    ox = oy = 0
    if st is not SheetType.TYPE1:
        if crop_rect is not None:
            fc = layout.manual_crop(small, crop_rect)
            how = "manual"
        else:
            fc = layout.find_inner_frame(small, profile)
            how = "frame"
        small = fc.image
        ox, oy = fc.rect[0], fc.rect[1]
        res.crop_rect = tuple(fc.rect)
        log.append({"stage": "crop", "method": how, "rect": list(fc.rect),
                    "frame_bbox": list(fc.frame_bbox), "interior_bbox": list(fc.interior_bbox),
                    "shift": list(profile.shift)})

    binary = layout.binarize_sheet(small, profile)
    log.append({"stage": "binarize", "threshold": profile.threshold, "invert": profile.invert})
    binary = layout.clean_sheet(binary, profile)
    log.append({"stage": "clean", "min_contour_px": profile.min_contour_px, "foreground": binary.count})

    pieces = []
    if st is SheetType.TYPE1:
        for lead, strip in extract.crop_type1_leads(binary, profile.lookup):
            rect = dict(profile.lookup)[lead]
            pieces.append((lead, strip, tuple(rect)))
        log.append({"stage": "segment", "method": "lookup", "leads": len(pieces)})
    else:
        md = (extract.default_min_distance(binary.height, profile.peak_divisor)
              if min_distance is None else min_distance)
        prof = extract.row_profile(binary)
        peaks = extract.find_strip_peaks(prof, md)
        cuts = extract.cut_points(prof, peaks, trailing_threshold)
        ranges = extract.strips_from_cuts(binary.height, cuts)
        names = _strip_names(profile, len(ranges))
        for name, (a, b) in zip(names, ranges):
            strip = binary.crop(0, a, binary.width, b - a)
            # fragments of neighbouring strokes cut off at the boundary
            strip = contours.filter_small(strip, profile.min_contour_px)
            pieces.append((name, strip, (ox, oy + a, binary.width, b - a)))
        log.append({"stage": "segment", "method": "row_profile", "min_distance": md,
                    "trailing_threshold": trailing_threshold, "peaks": peaks, "cuts": cuts,
                    "profile": prof.counts.tolist()})
        if len(ranges) != len(profile.strip_leads):
            res.warnings.append(f"found {len(ranges)} strips, expected {len(profile.strip_leads)}")

    for lead, strip, rect in pieces:
        try:
            tr = extract.trace_columns(strip, lead, rect)
        except ValueError as exc:
            res.warnings.append(f"lead {lead}: {exc}")
            continue
        ts = extract.calibrate(tr, profile.px_per_big_square, speed, gain)
        res.leads.append(LeadResult(lead, tr, ts, _upsample(ts, upsample)))
    log.append({"stage": "calibrate", "px_per_big_square": profile.px_per_big_square,
                "speed_mm_s": speed, "gain_mm_mv": gain,
                "leads": [r.lead for r in res.leads]})
    log.append({"stage": "upsample", "L": upsample})
    return res


def compare_to_truth(lead: LeadResult, truth, use_upsampled: bool = True) -> dict:
    """RMSE (mV) and time-scale error of a recovered lead against synthetic truth.

    Sample positions map to analysis x through the crop origin and pixel
    centre; both series are referenced to their median over the non-gap
    columns, which is how calibration defines zero volts.
    """
    ts = lead.upsampled if use_upsampled else lead.series
    L = int(ts.meta.get("upsample", 1)) if use_upsampled else 1
    x0 = lead.trace.crop[0]
    cols = x0 + np.arange(lead.trace.columns.size) + 0.5
    good_cols = ~lead.trace.gap
    zero = float(np.median(truth.voltage(truth.time_at_x(cols[good_cols]))))
    pos = np.arange(ts.values.size) / L
    x = x0 + pos + 0.5
    inside = (pos <= lead.trace.columns.size - 1) & (x >= truth.x_start) & (x <= truth.x_end)
    keep = inside & ~ts.gap
    ref = truth.voltage(truth.time_at_x(x[keep])) - zero
    err = ts.values[keep] - ref
    rmse = float(np.sqrt(np.mean(err ** 2))) if keep.any() else float("nan")
    scale = _time_scale_error(ts, truth, x0, L)
    return {"rmse_mv": rmse, "time_scale_error": scale, "samples": int(keep.sum())}


def _time_scale_error(ts, truth, x0: float, L: int) -> float:
    """|slope - 1| of recovered vs true R-peak times (least squares)."""
    beats = [tb for tb in truth.waveform.beat_times]
    t_true = []
    t_rec = []
    r_true = np.asarray(beats) - truth.t0
    dur = (truth.x_end - truth.x_start) / truth.px_per_s
    times = (x0 + np.arange(ts.values.size) / L + 0.5 - truth.x_start) / truth.px_per_s
    half = 0.08
    for tr in r_true:
        if tr - half < 0 or tr + half > dur:
            continue
        win = (times >= tr - half) & (times <= tr + half) & ~ts.gap
        if win.sum() < 3:
            continue
        idx = np.flatnonzero(win)
        k = idx[np.argmax(ts.values[idx])]
        t_true.append(tr)
        # recovered time assumes the nominal calibration (column rate dt)
        t_rec.append(k * ts.dt)
    if len(t_true) < 2:
        return float("nan")
    slope = np.polyfit(np.asarray(t_true), np.asarray(t_rec), 1)[0]
    return float(abs(slope - 1.0))
