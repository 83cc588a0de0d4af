"""Border following (Suzuki-Abe), enclosed-area measurement, and small-blob removal.

Foreground is 8-connected, background 4-connected. The area of a contour is
the number of pixels it envelops: the component itself plus everything inside
its holes, so a ring's outer contour counts its hole too.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .raster import BinaryImage


@dataclass(frozen=True, eq=False)
class Contour:
    points: np.ndarray        # (n, 2) int32, (x, y) along the border
    is_hole: bool
    parent: int               # index into the contour list, -1 for top level
    area: int
    bbox: tuple               # (x, y, w, h)

    @property
    def start(self) -> tuple:
        return int(self.points[0, 0]), int(self.points[0, 1])


@dataclass
class RegionTree:
    """Filled sizes of every 8-connected foreground and 4-connected background region."""
    fg_labels: np.ndarray     # (h, w), 0 = background
    bg_labels: np.ndarray     # (h + 2, w + 2) over the zero-padded image, 0 = foreground
    fg_filled: np.ndarray     # index by fg label
    bg_filled: np.ndarray     # index by bg label; label 1 is the unbounded outside


def _first_pixels(labels: np.ndarray, n: int) -> np.ndarray:
    # flat index of each label's first pixel in raster order; -1 for unused labels
    flat = labels.ravel()
    nz = np.flatnonzero(flat)
    first = np.full(n + 1, -1, dtype=np.int64)
    vals = flat[nz]
    _, idx = np.unique(vals, return_index=True)
    first[vals[idx]] = nz[idx]
    return first


def region_tree(img: BinaryImage) -> RegionTree:
    k = _backend.kernels
    h, w = img.height, img.width
    fg, nf = k.label_components(img.pixels, 8)
    padded = np.zeros((h + 2, w + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = 1 - img.pixels
    padded[0, :] = padded[-1, :] = 1
    padded[:, 0] = padded[:, -1] = 1
    bg, nb = k.label_components(padded, 4)

    fsize = np.bincount(fg.ravel(), minlength=nf + 1).astype(np.int64)
    # the outside region's padding ring is not part of the image
    bsize = np.bincount(bg[1:-1, 1:-1].ravel(), minlength=nb + 1).astype(np.int64)
    fsize[0] = bsize[0] = 0

    ffirst = _first_pixels(fg, nf)
    bfirst = _first_pixels(bg, nb)
    # parent of a fg component: background just left of its first pixel
    fr, fc = np.divmod(ffirst[1:], w)
    fparent = bg[fr + 1, fc] if nf else np.zeros(0, dtype=np.int32)
    # parent of an inner bg region: foreground just above its first pixel
    br, bc = np.divmod(bfirst[2:], w + 2)
    bparent = fg[br - 2, bc - 1] if nb > 1 else np.zeros(0, dtype=np.int32)

    # children start later in raster order than their parents; sweep backwards
    nodes = [(int(ffirst[i]) // w * (w + 2) + int(ffirst[i]) % w + w + 3, 0, i) for i in range(1, nf + 1)]
    nodes += [(int(bfirst[j]), 1, j) for j in range(2, nb + 1)]
    nodes.sort(reverse=True)
    ffill = fsize.copy()
    bfill = bsize.copy()
    for _, kind, i in nodes:
        if kind == 0:
            p = int(fparent[i - 1])
            if p >= 2:
                bfill[p] += ffill[i]
        else:
            p = int(bparent[i - 2])
            ffill[p] += bfill[i]
    return RegionTree(fg, bg, ffill, bfill)


def find_contours(img: BinaryImage) -> list[Contour]:
    """All outer and hole borders in raster order of their starting pixel."""
    if img.count == 0:
        return []
    raw = _backend.kernels.trace_borders(img.pixels)
    tree = region_tree(img)
    out = []
    for pts, is_hole, parent in raw:
        x, y = int(pts[0, 0]), int(pts[0, 1])
        if is_hole:
            area = int(tree.bg_filled[tree.bg_labels[y + 1, x + 2]])
        else:
            area = int(tree.fg_filled[tree.fg_labels[y, x]])
        x0, y0 = pts.min(axis=0)
        x1, y1 = pts.max(axis=0)
        bbox = (int(x0), int(y0), int(x1 - x0 + 1), int(y1 - y0 + 1))
        out.append(Contour(pts, bool(is_hole), int(parent), area, bbox))
    return out


def max_area_contour(contours: list[Contour]) -> Contour:
    """Largest enclosed area; ties go to the earliest in scan order."""
    if not contours:
        raise ValueError("no contours")
    best = contours[0]
    for c in contours[1:]:
        if c.area > best.area:
            best = c
    return best


def filter_small(img: BinaryImage, min_pixels: int) -> BinaryImage:
    """Erase every foreground component enveloping fewer than ``min_pixels`` pixels."""
    if min_pixels < 0:
        raise ValueError("min_pixels must be >= 0")
    if min_pixels == 0 or img.count == 0:
        return img
    tree = region_tree(img)
    keep = tree.fg_filled >= min_pixels
    keep[0] = False
    return BinaryImage(keep[tree.fg_labels])


def draw_filled(contours: list[Contour], shape: tuple) -> BinaryImage:
    """Rebuild a mask from a contour list (inverse of ``find_contours``).

    Outer borders are filled, then each hole is carved as the 4-connected
    region east of its starting pixel, bounded by its border.
    """
    from scipy import ndimage

    four = ndimage.generate_binary_structure(2, 1)
    h, w = shape
    out = np.zeros((h, w), dtype=np.uint8)
    for c in contours:
        ring = np.zeros((h + 2, w + 2), dtype=bool)
        ring[c.points[:, 1] + 1, c.points[:, 0] + 1] = True
        if c.is_hole:
            lab, _ = ndimage.label(~ring, structure=four)
            x, y = c.start
            out[(lab == lab[y + 1, x + 2])[1:-1, 1:-1]] = 0
        else:
            lab, _ = ndimage.label(~ring, structure=four)
            inside = (lab != lab[0, 0])[1:-1, 1:-1]
            out[inside | ring[1:-1, 1:-1]] = 1
    return BinaryImage(out)
