"""Sheet types, their processing profiles, and the per-type cleanup steps.

All pixel quantities in a profile are at analysis scale, i.e. after the
sheet has been downsized by the profile's factor.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import contours
from .raster import SHARPEN, BinaryImage, GrayImage, convolve, median_filter, morphological_close, threshold


class SheetType(enum.Enum):
    TYPE1 = 1
    TYPE2 = 2
    TYPE3 = 3

    @classmethod
    def parse(cls, value) -> "SheetType":
        if isinstance(value, SheetType):
            return value
        s = str(value).strip().lower().replace(" ", "").replace("_", "")
        for prefix in ("type", "t"):
            if s.startswith(prefix):
                s = s[len(prefix):]
                break
        if s in ("1", "2", "3"):
            return cls(int(s))
        raise ValueError(f"unknown sheet type {value!r}")

    @property
    def label(self) -> str:
        return f"type{self.value}"


# Type 1 layout: three bands of four 2.5 s tiles, standard lead placement.
TYPE1_LEADS = (
    ("I", "aVR", "V1", "V4"),
    ("II", "aVL", "V2", "V5"),
    ("III", "aVF", "V3", "V6"),
)


@dataclass(frozen=True)
class Type1Geometry:
    margin: int = 20
    tile_width: int = 200       # 2.5 s at 25 mm/s with 16 px per big square
    band_height: int = 96

    @property
    def width(self) -> int:
        return 2 * self.margin + 4 * self.tile_width

    @property
    def height(self) -> int:
        return 2 * self.margin + 3 * self.band_height

    def table(self) -> list:
        out = []
        for r, row in enumerate(TYPE1_LEADS):
            for c, lead in enumerate(row):
                out.append((lead, (self.margin + c * self.tile_width, self.margin + r * self.band_height,
                                   self.tile_width, self.band_height)))
        return out


@dataclass(frozen=True)
class TypeProfile:
    sheet_type: SheetType
    factor: int
    threshold: int
    invert: bool
    shift: tuple = (0, 0, 0, 0)         # (dy_top, dy_bottom, dx_left, dx_right)
    min_contour_px: int = 30
    px_per_big_square: float = 16.0
    lookup: tuple = ()                  # ((lead, (x, y, w, h)), ...) for Type 1
    strip_leads: tuple = ()             # names for row-profile strips, top to bottom
    close_size: int = 3
    median_window: int = 5
    peak_divisor: int = 6               # strip-peak min distance = cleaned height / divisor

    def __post_init__(self):
        if self.factor not in (4, 8):
            raise ValueError(f"downsample factor must be 4 or 8, got {self.factor}")
        if any(s < 0 for s in self.shift) or len(self.shift) != 4:
            raise ValueError("coordinate shift needs four non-negative entries")
        if not self.px_per_big_square > 0:
            raise ValueError("px_per_big_square must be positive")
        if not 0 <= self.threshold <= 255:
            raise ValueError("threshold must lie in [0, 255]")
        if self.min_contour_px < 0:
            raise ValueError("min_contour_px must be >= 0")
        if self.peak_divisor < 1:
            raise ValueError("peak_divisor must be >= 1")

    def with_overrides(self, overrides: dict | None) -> "TypeProfile":
        if not overrides:
            return self
        kw = {}
        for k, v in overrides.items():
            if k not in self.__dataclass_fields__ or k == "sheet_type":
                raise ValueError(f"unknown profile field {k!r}")
            if k in ("shift", "strip_leads"):
                v = tuple(v)
            elif k == "lookup":
                v = tuple((str(n), tuple(int(a) for a in r)) for n, r in v)
            kw[k] = v
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "sheet_type": self.sheet_type.label,
            "factor": self.factor,
            "threshold": self.threshold,
            "invert": self.invert,
            "shift": list(self.shift),
            "min_contour_px": self.min_contour_px,
            "px_per_big_square": self.px_per_big_square,
            "lookup": [[n, list(r)] for n, r in self.lookup],
            "strip_leads": list(self.strip_leads),
            "close_size": self.close_size,
            "median_window": self.median_window,
            "peak_divisor": self.peak_divisor,
        }


DEFAULT_PROFILES = {
    SheetType.TYPE1: TypeProfile(
        SheetType.TYPE1, factor=4, threshold=128, invert=True, min_contour_px=50,
        px_per_big_square=16.0, lookup=tuple((n, r) for n, r in Type1Geometry().table()),
    ),
    SheetType.TYPE2: TypeProfile(
        SheetType.TYPE2, factor=4, threshold=100, invert=True, shift=(10, 10, 10, 10),
        min_contour_px=30, px_per_big_square=16.0, strip_leads=("I", "aVR", "V1"),
    ),
    SheetType.TYPE3: TypeProfile(
        SheetType.TYPE3, factor=8, threshold=100, invert=True, shift=(15, 15, 15, 15),
        min_contour_px=30, px_per_big_square=12.0, strip_leads=("V1", "V2", "V3"),
    ),
}


def profile_for(sheet_type, overrides: dict | None = None) -> TypeProfile:
    return DEFAULT_PROFILES[SheetType.parse(sheet_type)].with_overrides(overrides)


def classify_sheet(entry: dict | None = None, flag=None) -> SheetType:
    """Declared sheet type: the CLI flag wins over the manifest entry. No detection."""
    if flag is not None:
        return SheetType.parse(flag)
    if entry and entry.get("type") is not None:
        return SheetType.parse(entry["type"])
    raise ValueError("sheet type required")


class FrameNotFound(ValueError):
    pass


@dataclass(frozen=True)
class FrameCrop:
    image: GrayImage
    rect: tuple               # (x, y, w, h) in the input image
    frame_bbox: tuple         # outer frame border
    interior_bbox: tuple      # region inside the frame before the shift


def find_inner_frame(img: GrayImage, profile: TypeProfile) -> FrameCrop:
    """Locate the framed region; the input image is never modified.

    Working copy: median filter, sharpen, threshold, close, trace contours.
    The largest contour is the frame's outer border; the crop targets the
    largest hole directly inside it (the framed interior), falling back to
    the outer box when the frame has no hole. The profile shift then insets
    each side.
    """
    if profile.sheet_type is SheetType.TYPE1:
        raise ValueError("inner-frame extraction applies to Type 2 and Type 3 sheets only")
    work = median_filter(img, profile.median_window)
    work = convolve(work, SHARPEN)
    work = threshold(work, profile.threshold, profile.invert)
    work = morphological_close(work, profile.close_size)
    found = contours.find_contours(work)
    outers = [c for c in found if not c.is_hole]
    if not outers:
        raise FrameNotFound("frame not found; supply manual crop coordinates")
    frame = contours.max_area_contour(outers)
    fi = found.index(frame)
    holes = [c for c in found if c.is_hole and c.parent == fi]
    fx, fy, fw, fh = frame.bbox
    if holes:
        hole = contours.max_area_contour(holes)
        hx, hy, hw, hh = hole.bbox
        # hole border pixels belong to the frame; the interior starts one pixel in
        interior = (hx + 1, hy + 1, max(hw - 2, 1), max(hh - 2, 1))
    else:
        interior = frame.bbox
    dy_top, dy_bottom, dx_left, dx_right = profile.shift
    x0, y0 = interior[0] + dx_left, interior[1] + dy_top
    x1 = interior[0] + interior[2] - dx_right
    y1 = interior[1] + interior[3] - dy_bottom
    if x1 - x0 < 1 or y1 - y0 < 1 or fw * fh < 0.05 * img.width * img.height:
        raise FrameNotFound("frame not found; supply manual crop coordinates")
    rect = (int(x0), int(y0), int(x1 - x0), int(y1 - y0))
    return FrameCrop(img.crop(*rect), rect, frame.bbox, tuple(int(v) for v in interior))


def extract_inner_frame(img: GrayImage, profile: TypeProfile) -> GrayImage:
    return find_inner_frame(img, profile).image


def manual_crop(img: GrayImage, rect) -> FrameCrop:
    x, y, w, h = (int(v) for v in rect)
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        raise ValueError(f"manual crop {rect} outside the {img.width}x{img.height} image")
    return FrameCrop(img.crop(x, y, w, h), (x, y, w, h), (x, y, w, h), (x, y, w, h))


def binarize_sheet(img: GrayImage, profile: TypeProfile) -> BinaryImage:
    return threshold(img, profile.threshold, profile.invert)


def clean_sheet(img: BinaryImage, profile: TypeProfile) -> BinaryImage:
    """Drop blobs (glyphs, grid residue) enveloping fewer than ``min_contour_px`` pixels.

    Thin fragments of the signal itself can go too; that loss is accepted.
    """
    return contours.filter_small(img, profile.min_contour_px)
