"""Synthetic ECG sheets with exact ground truth.

Waveforms are sums of Gaussian bumps, so the true voltage is known at any
time. Sheets are drawn at full scan resolution from analysis-scale geometry
(the coordinates the pipeline works in after downsizing), which keeps the
ground truth directly comparable with digitizer output.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .edgeline import rotate
from .extract import BIG_SQUARE_MM, GAIN_MM_MV, SPEED_MM_S
from .layout import DEFAULT_PROFILES, TYPE1_LEADS, SheetType, Type1Geometry
from .raster import GrayImage

CLASS_BACKGROUND, CLASS_GRID, CLASS_INK, CLASS_GLYPH = 0, 1, 2, 3
CLASS_NAMES = ("background", "grid", "ink", "glyph")

INK_GRAY = 30
T1_MINOR_RGB = (250, 200, 200)
T1_MAJOR_RGB = (230, 130, 130)
T1_FRAME_RGB = (205, 100, 100)   # darker than the grid, still above the Type-1 threshold
T2_GRID_GRAY = 40

# Bump shapes relative to the R peak: (name, offset s, width s, amplitude mV)
BASE_WAVES = (
    ("P", -0.16, 0.022, 0.12),
    ("Q", -0.035, 0.014, -0.08),
    ("S", 0.045, 0.022, -0.25),
    ("T", 0.30, 0.060, 0.30),
)
BRUGADA_WAVES = (
    ("ST", 0.10, 0.050, 0.40),
    ("Tinv", 0.30, 0.060, -0.55),   # cancels the normal T and leaves it inverted
)
BRUGADA_LEADS = ("V1", "V2")


@dataclass
class Waveform:
    """Beats at ``beat_times`` (s, R-peak instants), each a fixed set of bumps."""
    beat_times: list
    waves: list                       # [(name, offset, sigma, amplitude)]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        v = np.zeros_like(t)
        for tb in self.beat_times:
            for _, off, sig, amp in self.waves:
                d = t - (tb + off)
                near = np.abs(d) < 6 * sig
                if near.any():
                    v[near] += amp * np.exp(-0.5 * (d[near] / sig) ** 2)
        return v

    def to_dict(self) -> dict:
        return {"beat_times": list(self.beat_times), "waves": [list(w) for w in self.waves]}

    @classmethod
    def from_dict(cls, d) -> "Waveform":
        return cls(list(d["beat_times"]), [tuple(w) for w in d["waves"]])


@dataclass
class SynthSpec:
    sheet_type: SheetType = SheetType.TYPE3
    leads: tuple = ()                 # strip leads for Type 2/3; Type 1 uses its fixed layout
    duration: float = 0.0             # strip length in seconds (Type 2/3), 0 = profile default
    heart_rate: float = 0.0           # beats per minute, 0 = seeded in [65, 90]
    rotation: float = 0.0             # degrees, clockwise as displayed
    noise: float = 2.0                # Gaussian intensity noise, full-resolution sigma
    glyphs: bool = True               # lead labels (Type 1)
    specks: int = 0                   # salt specks (Type 3)
    brugada: bool = False             # coved ST and inverted T on V1/V2
    pen: float = 2.0                  # stroke width, analysis pixels
    px_per_big_square: float = 0.0    # analysis scale, 0 = profile default
    factor: int = 0                   # full-res / analysis, 0 = profile default
    waves: list | None = None         # explicit (name, offset s, sigma s, amp mV) bumps; [] = flat line

    def __post_init__(self):
        self.sheet_type = SheetType.parse(self.sheet_type)
        prof = DEFAULT_PROFILES[self.sheet_type]
        if not self.px_per_big_square:
            self.px_per_big_square = prof.px_per_big_square
        if not self.factor:
            self.factor = prof.factor
        if not self.leads:
            self.leads = TYPE1_ALL if self.sheet_type is SheetType.TYPE1 else prof.strip_leads
        self.leads = tuple(self.leads)
        if not self.duration:
            self.duration = {SheetType.TYPE1: 10.0, SheetType.TYPE2: 6.0, SheetType.TYPE3: 8.0}[self.sheet_type]
        if not self.px_per_big_square > 0 or self.pen <= 0:
            raise ValueError("grid pitch and pen width must be positive")
        if not self.heart_rate >= 0 or not math.isfinite(self.heart_rate):
            raise ValueError("heart rate must be finite and non-negative")
        if self.waves is not None:
            ws = []
            for w in self.waves:
                name, off, sig, amp = w
                if not all(math.isfinite(float(v)) for v in (off, sig, amp)) or float(sig) <= 0:
                    raise ValueError(f"bad bump {name!r}: offset/amplitude must be finite, width positive")
                ws.append((str(name), float(off), float(sig), float(amp)))
            self.waves = ws
        if self.specks == 0 and self.sheet_type is SheetType.TYPE3:
            self.specks = 40

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sheet_type"] = self.sheet_type.label
        d["leads"] = list(self.leads)
        if self.waves is not None:
            d["waves"] = [list(w) for w in self.waves]
        return d


TYPE1_ALL = tuple(lead for row in TYPE1_LEADS for lead in row)


@dataclass
class LeadTruth:
    lead: str
    x_start: float                    # analysis-scale x of t = 0
    x_end: float
    baseline_y: float                 # analysis-scale y of 0 mV
    px_per_s: float
    px_per_mv: float
    waveform: Waveform
    t0: float = 0.0                   # waveform time at x_start

    def voltage(self, t) -> np.ndarray:
        return self.waveform(np.asarray(t) + self.t0)

    def time_at_x(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.x_start) / self.px_per_s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["waveform"] = self.waveform.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "LeadTruth":
        d = dict(d)
        d["waveform"] = Waveform.from_dict(d["waveform"])
        return cls(**d)


@dataclass
class Sheet:
    spec: SynthSpec
    image: np.ndarray                 # (H, W) uint8, or (H, W, 3) for Type 1
    classes: np.ndarray               # (H, W) uint8 class per pixel, rotated with the sheet
    truths: list
    frame_rect: tuple | None = None   # analysis-scale outer frame box (x, y, w, h)
    interior_rect: tuple | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def gray(self) -> GrayImage:
        from .raster import to_grayscale
        return to_grayscale(self.image)

    def mask(self, cls: int) -> np.ndarray:
        return self.classes == cls

    def truth(self, lead: str) -> LeadTruth:
        for t in self.truths:
            if t.lead == lead:
                return t
        raise KeyError(lead)

    def truth_json(self) -> str:
        doc = {"spec": self.spec.to_dict(), "seed": self.seed, "frame_rect": self.frame_rect,
               "interior_rect": self.interior_rect, "leads": [t.to_dict() for t in self.truths]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- waveform ------------------------------------------------------------

def make_waveform(rng, lead: str, duration: float, heart_rate: float, brugada: bool,
                  waves=None) -> tuple:
    """Seeded beat train covering ``[0, duration]``; returns (waveform, t0)."""
    rr = 60.0 / heart_rate
    t0 = float(rng.uniform(0.0, rr))
    times = []
    t = -rr
    while t < duration + t0 + rr:
        times.append(round(t, 12))
        t += rr * float(rng.uniform(0.97, 1.03))
    r_amp = float(rng.uniform(0.6, 1.1))
    r_sig = float(rng.uniform(0.028, 0.034))
    if waves is not None:
        waves = [tuple(w) for w in waves]
    else:
        waves = [("R", 0.0, r_sig, r_amp)] + [tuple(w) for w in BASE_WAVES]
    if brugada and lead in BRUGADA_LEADS:
        waves += [tuple(w) for w in BRUGADA_WAVES]
    return Waveform(times, waves), t0


# --- rendering -----------------------------------------------------------

_FONT = {
    "I": ("111", "010", "010", "010", "111"),
    "V": ("101", "101", "101", "101", "010"),
    "R": ("110", "101", "110", "101", "101"),
    "L": ("100", "100", "100", "100", "111"),
    "F": ("111", "100", "110", "100", "100"),
    "a": ("000", "011", "101", "101", "011"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("110", "001", "010", "100", "111"),
    "3": ("110", "001", "010", "001", "110"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "110", "001", "110"),
    "6": ("011", "100", "111", "101", "111"),
}
GLYPH_CELL = 1.5        # analysis pixels per font cell; characters stay below 50 px


class Canvas:
    """Full-resolution raster addressed in analysis-scale coordinates."""

    def __init__(self, width: float, height: float, factor: int, rgb: bool):
        self.f = factor
        self.w = int(round(width * factor))
        self.h = int(round(height * factor))
        shape = (self.h, self.w, 3) if rgb else (self.h, self.w)
        self.img = np.full(shape, 255, dtype=np.uint8)
        self.cls = np.zeros((self.h, self.w), dtype=np.uint8)

    def _span(self, a: float, b: float, n: int) -> slice:
        return slice(max(0, int(round(a * self.f))), min(n, int(round(b * self.f))))

    def rect(self, x0, y0, x1, y1, color, cls):
        rs, cs = self._span(y0, y1, self.h), self._span(x0, x1, self.w)
        self.img[rs, cs] = color
        self.cls[rs, cs] = cls

    def hline_px(self, y: float, x0: float, x1: float, thick_px: int, color, cls):
        r = int(round(y * self.f))
        cs = self._span(x0, x1, self.w)
        self.img[max(0, r):r + thick_px, cs] = color
        self.cls[max(0, r):r + thick_px, cs] = cls

    def vline_px(self, x: float, y0: float, y1: float, thick_px: int, color, cls):
        c = int(round(x * self.f))
        rs = self._span(y0, y1, self.h)
        self.img[rs, max(0, c):c + thick_px] = color
        self.cls[rs, max(0, c):c + thick_px] = cls

    def stroke(self, truth: LeadTruth, pen: float, color):
        """Square pen of side ``pen`` swept along the lead's curve."""
        r = pen / 2.0
        f = self.f
        c0 = max(0, int(math.floor((truth.x_start - r) * f)))
        c1 = min(self.w, int(math.ceil((truth.x_end + r) * f)))
        if c1 <= c0:
            return
        # curve on a fine grid, then running min/max over the pen footprint
        sub = 4
        xs = (np.arange(c0 * sub, c1 * sub) + 0.5) / (f * sub)
        xc = np.clip(xs, truth.x_start, truth.x_end)
        y = truth.baseline_y - truth.voltage(truth.time_at_x(xc)) * truth.px_per_mv
        y[(xs < truth.x_start - r) | (xs > truth.x_end + r)] = np.nan
        from scipy.ndimage import maximum_filter1d, minimum_filter1d
        k = max(1, int(round(2 * r * f * sub)) | 1)
        yy = np.where(np.isnan(y), np.inf, y)
        lo = minimum_filter1d(yy, k, mode="constant", cval=np.inf)
        yy = np.where(np.isnan(y), -np.inf, y)
        hi = maximum_filter1d(yy, k, mode="constant", cval=-np.inf)
        lo = lo.reshape(-1, sub).min(axis=1) - r
        hi = hi.reshape(-1, sub).max(axis=1) + r
        rows_c = (np.arange(self.h) + 0.5) / f
        for j, (a, b) in enumerate(zip(lo, hi)):
            if not np.isfinite(a) or not np.isfinite(b):
                continue
            i0 = max(0, int(math.ceil(a * f - 0.5)))
            i1 = min(self.h, int(math.floor(b * f - 0.5)) + 1)
            if i1 > i0:
                self.img[i0:i1, c0 + j] = color
                self.cls[i0:i1, c0 + j] = CLASS_INK
        del rows_c

    def text(self, s: str, x: float, y: float, color):
        cell = GLYPH_CELL
        cx = x
        for ch in s:
            bm = _FONT.get(ch) or _FONT.get(ch.upper())
            if bm is None:
                cx += 4 * cell
                continue
            for r, row in enumerate(bm):
                for c, bit in enumerate(row):
                    if bit == "1":
                        x0, y0 = cx + c * cell, y + r * cell
                        rs, cs = self._span(y0, y0 + cell, self.h), self._span(x0, x0 + cell, self.w)
                        ink = self.cls[rs, cs] != CLASS_INK
                        self.img[rs, cs][ink] = color
                        self.cls[rs, cs][ink] = CLASS_GLYPH
            cx += 4 * cell


def _grid_positions(x0: float, x1: float, pitch: float) -> list:
    n = int(math.floor((x1 - x0) / pitch + 1e-9))
    return [x0 + k * pitch for k in range(n + 1)]


def _draw_t1_grid(cv: Canvas, x0, y0, x1, y1, ppbs):
    minor = ppbs / 5.0
    for k, x in enumerate(_grid_positions(x0, x1, minor)):
        major = k % 5 == 0
        cv.vline_px(x, y0, y1, cv.f if major else max(1, cv.f // 2),
                    T1_MAJOR_RGB if major else T1_MINOR_RGB, CLASS_GRID)
    for k, y in enumerate(_grid_positions(y0, y1, minor)):
        major = k % 5 == 0
        cv.hline_px(y, x0, x1, cv.f if major else max(1, cv.f // 2),
                    T1_MAJOR_RGB if major else T1_MINOR_RGB, CLASS_GRID)


def _draw_t2_grid(cv: Canvas, x0, y0, x1, y1, ppbs):
    """Thin dark major lines with a dot at every minor crossing."""
    for x in _grid_positions(x0, x1, ppbs):
        cv.vline_px(x, y0, y1, 2, T2_GRID_GRAY, CLASS_GRID)
    for y in _grid_positions(y0, y1, ppbs):
        cv.hline_px(y, x0, x1, 2, T2_GRID_GRAY, CLASS_GRID)
    minor = ppbs / 5.0
    for x in _grid_positions(x0, x1, minor):
        for y in _grid_positions(y0, y1, minor):
            cv.rect(x, y, x + 2.0 / cv.f, y + 2.0 / cv.f, T2_GRID_GRAY, CLASS_GRID)


@dataclass(frozen=True)
class FramedGeometry:
    margin: float          # white paper outside the frame
    frame: float           # frame line thickness
    pad: float             # inner padding between frame and signal area
    band: float            # strip height
    baseline: float        # baseline offset inside a band (from its top)


FRAMED = {
    SheetType.TYPE2: FramedGeometry(margin=16, frame=3, pad=16, band=96, baseline=58),
    SheetType.TYPE3: FramedGeometry(margin=10, frame=3, pad=20, band=60, baseline=36),
}
T1_BASELINE = 60


def render(spec: SynthSpec, seed: int = 0) -> Sheet:
    rng = np.random.default_rng(seed)
    ppbs = spec.px_per_big_square
    px_per_mm = ppbs / BIG_SQUARE_MM
    px_per_s = SPEED_MM_S * px_per_mm
    px_per_mv = GAIN_MM_MV * px_per_mm
    hr = spec.heart_rate or float(rng.uniform(65.0, 90.0))
    r = spec.pen / 2.0
    truths = []
    frame_rect = interior_rect = None

    if spec.sheet_type is SheetType.TYPE1:
        geo = Type1Geometry()
        cv = Canvas(geo.width, geo.height, spec.factor, rgb=True)
        _draw_t1_grid(cv, 0, 0, geo.width, geo.height, ppbs)
        fm = geo.margin / 2.0
        ft = 2.0
        for (a, b, c, d) in ((fm - ft, fm - ft, geo.width - fm + ft, fm),
                             (fm - ft, geo.height - fm, geo.width - fm + ft, geo.height - fm + ft),
                             (fm - ft, fm - ft, fm, geo.height - fm + ft),
                             (geo.width - fm, fm - ft, geo.width - fm + ft, geo.height - fm + ft)):
            cv.rect(a, b, c, d, T1_FRAME_RGB, CLASS_GRID)
        tile_s = geo.tile_width / px_per_s
        for lead, (x, y, w, h) in geo.table():
            wf, t0 = make_waveform(rng, lead, tile_s, hr, spec.brugada, spec.waves)
            # inset by the pen radius so neighbouring tiles never share a column
            truths.append(LeadTruth(lead, x + r, x + w - r, y + T1_BASELINE, px_per_s, px_per_mv, wf, t0))
        sheet_w, sheet_h = geo.width, geo.height
        glyph_pos = {lead: (x + 3, y + 3) for lead, (x, y, w, h) in geo.table()}
    else:
        g = FRAMED[spec.sheet_type]
        n = len(spec.leads)
        content_w = spec.duration * px_per_s
        fx0 = g.margin
        ix0 = fx0 + g.frame
        ix1 = ix0 + 2 * g.pad + content_w
        fy0 = g.margin
        iy0 = fy0 + g.frame
        iy1 = iy0 + 2 * g.pad + n * g.band
        sheet_w = ix1 + g.frame + g.margin
        sheet_h = iy1 + g.frame + g.margin
        cv = Canvas(sheet_w, sheet_h, spec.factor, rgb=False)
        if spec.sheet_type is SheetType.TYPE2:
            _draw_t2_grid(cv, ix0, iy0, ix1, iy1, ppbs)
        for (a, b, c, d) in ((fx0, fy0, ix1 + g.frame, iy0), (fx0, iy1, ix1 + g.frame, iy1 + g.frame),
                             (fx0, fy0, ix0, iy1 + g.frame), (ix1, fy0, ix1 + g.frame, iy1 + g.frame)):
            cv.rect(a, b, c, d, INK_GRAY, CLASS_GRID)
        frame_rect = (fx0, fy0, ix1 + g.frame - fx0, iy1 + g.frame - fy0)
        interior_rect = (ix0, iy0, ix1 - ix0, iy1 - iy0)
        for k, lead in enumerate(spec.leads):
            wf, t0 = make_waveform(rng, lead, spec.duration, hr, spec.brugada, spec.waves)
            base = iy0 + g.pad + k * g.band + g.baseline
            truths.append(LeadTruth(lead, ix0 + g.pad, ix0 + g.pad + content_w, base, px_per_s, px_per_mv, wf, t0))
        glyph_pos = {}

    for t in truths:
        cv.stroke(t, spec.pen, (INK_GRAY,) * 3 if cv.img.ndim == 3 else INK_GRAY)
    if spec.glyphs and spec.sheet_type is SheetType.TYPE1:
        for lead, (gx, gy) in glyph_pos.items():
            cv.text(lead, gx, gy, (INK_GRAY,) * 3)
    if spec.sheet_type is SheetType.TYPE3 and spec.specks:
        _specks(cv, rng, spec.specks, interior_rect, truths)

    img = cv.img
    if spec.noise > 0:
        noise = rng.normal(0.0, spec.noise, img.shape[:2])
        if img.ndim == 3:
            noise = noise[..., None]
        img = np.clip(np.floor(img + noise + 0.5), 0, 255).astype(np.uint8)
    classes = cv.cls
    if spec.rotation:
        img = _rotate_any(img, spec.rotation)
        classes = _rotate_labels(classes, spec.rotation)
    return Sheet(spec, img, classes, truths, frame_rect, interior_rect, seed,
                 {"heart_rate": hr, "sheet_size": [sheet_w, sheet_h]})


def _specks(cv: Canvas, rng, count: int, rect, truths):
    """Small dark dots away from the strokes."""
    x, y, w, h = rect
    placed = 0
    tries = 0
    while placed < count and tries < 50 * count:
        tries += 1
        sx, sy = rng.uniform(x + 2, x + w - 4), rng.uniform(y + 2, y + h - 4)
        size = rng.uniform(0.8, 2.5)
        if any(abs(sy - t.baseline_y) < 30 and t.x_start - 4 < sx < t.x_end + 4 for t in truths):
            continue
        cv.rect(sx, sy, sx + size, sy + size, INK_GRAY, CLASS_GLYPH)
        placed += 1


def _rotate_any(img: np.ndarray, angle: float) -> np.ndarray:
    if img.ndim == 2:
        return rotate(GrayImage(img), angle).pixels.copy()
    return np.stack([rotate(GrayImage(img[..., c]), angle).pixels for c in range(3)], axis=-1)


def _rotate_labels(cls: np.ndarray, angle: float) -> np.ndarray:
    from scipy import ndimage
    a = math.radians(angle)
    c, s = math.cos(a), math.sin(a)
    h, w = cls.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    m = np.array([[c, -s], [s, c]])
    off = np.array([cy, cx]) - m @ np.array([cy, cx])
    return ndimage.affine_transform(cls, m, offset=off, order=0, mode="constant", cval=CLASS_BACKGROUND)


def truth_csv(truth: LeadTruth, rate: float = 1000.0) -> str:
    duration = (truth.x_end - truth.x_start) / truth.px_per_s
    n = int(math.floor(duration * rate)) + 1
    t = np.arange(n) / rate
    v = truth.voltage(t)
    lines = ["time_s,voltage_mV"] + [f"{a:.9g},{b:.9g}" for a, b in zip(t.tolist(), v.tolist())]
    return "\n".join(lines) + "\n"


def analysis_masks(sheet: Sheet, factor: int | None = None) -> dict:
    """Per-class coverage at analysis scale: fraction of each pixel's footprint."""
    f = factor or sheet.spec.factor
    from .raster import downsized_shape
    h, w = sheet.classes.shape
    oh, ow = downsized_shape(h, w, f)
    out = {}
    for k, name in enumerate(CLASS_NAMES):
        m = (sheet.classes == k).astype(np.float64)
        hh, ww = oh * f, ow * f
        mm = np.zeros((hh, ww))
        mm[:min(h, hh), :min(w, ww)] = m[:hh, :ww]
        out[name] = mm.reshape(oh, f, ow, f).mean(axis=(1, 3))
    return out
