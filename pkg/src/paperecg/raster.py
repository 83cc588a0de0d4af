"""Pixel rasters and the neighbourhood operations every pipeline stage uses.

All neighbourhood operations replicate edge pixels at the border.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import _backend

LUMA = (0.299, 0.587, 0.114)


def _round_half_up(a: np.ndarray) -> np.ndarray:
    return np.floor(a + 0.5)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.uint8)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit intensity raster, row-major ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2:
            raise ValueError(f"expected a 2-D raster, got shape {p.shape}")
        if p.dtype != np.uint8:
            if p.size and (p.min() < 0 or p.max() > 255):
                raise ValueError("intensities must lie in [0, 255]")
        object.__setattr__(self, "pixels", _frozen(p))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def crop(self, x: int, y: int, w: int, h: int) -> "GrayImage":
        return GrayImage(self.pixels[y:y + h, x:x + w])

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """0/1 raster; 1 is foreground (ink)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2:
            raise ValueError(f"expected a 2-D raster, got shape {p.shape}")
        if p.dtype == bool:
            p = p.astype(np.uint8)
        elif p.size and not np.isin(p, (0, 1)).all():
            raise ValueError("binary pixels must be 0 or 1")
        object.__setattr__(self, "pixels", _frozen(p))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def count(self) -> int:
        return int(self.pixels.sum(dtype=np.int64))

    def crop(self, x: int, y: int, w: int, h: int) -> "BinaryImage":
        return BinaryImage(self.pixels[y:y + h, x:x + w])

    def __eq__(self, other):
        return isinstance(other, BinaryImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class Kernel:
    size: int
    weights: tuple

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 1, got {self.size}")
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.size != self.size * self.size:
            raise ValueError("kernel needs size**2 weights")
        object.__setattr__(self, "weights", tuple(w.tolist()))

    @classmethod
    def from_array(cls, a) -> "Kernel":
        a = np.asarray(a, dtype=np.float64)
        return cls(a.shape[0], tuple(a.ravel().tolist()))

    def array(self) -> np.ndarray:
        return np.asarray(self.weights).reshape(self.size, self.size)


SHARPEN = Kernel.from_array([[-1, -1, -1], [-1, 9, -1], [-1, -1, -1]])
IDENTITY3 = Kernel.from_array([[0, 0, 0], [0, 1, 0], [0, 0, 0]])
BOX3 = Kernel.from_array(np.full((3, 3), 1 / 9))


def to_grayscale(rgb) -> GrayImage:
    """BT.601 luma, rounded half up."""
    a = np.asarray(rgb)
    if a.ndim == 2:
        if a.size == 0:
            raise ValueError("zero-dimension image")
        return GrayImage(a)
    if a.ndim != 3 or a.shape[2] < 3:
        raise ValueError(f"expected (h, w, 3) RGB, got shape {a.shape}")
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError("zero-dimension image")
    a = a[..., :3].astype(np.float64)
    if a.min() < 0 or a.max() > 255:
        raise ValueError("channel values must lie in [0, 255]")
    y = LUMA[0] * a[..., 0] + LUMA[1] * a[..., 1] + LUMA[2] * a[..., 2]
    return GrayImage(np.clip(_round_half_up(y), 0, 255).astype(np.uint8))


def downsized_shape(height: int, width: int, factor: int) -> tuple[int, int]:
    # Python round() is half-to-even: 2834/4 -> 708, 2375/4 -> 594
    return max(1, round(height / factor)), max(1, round(width / factor))


def _area_matrix(n_in: int, n_out: int) -> sparse.csr_matrix:
    """Row i holds the overlap of output cell i with each input pixel, normalised."""
    scale = n_in / n_out
    rows, cols, vals = [], [], []
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        k0, k1 = int(np.floor(lo)), min(int(np.ceil(hi)), n_in)
        for k in range(k0, k1):
            ov = min(hi, k + 1) - max(lo, k)
            if ov > 1e-12:
                rows.append(i)
                cols.append(k)
                vals.append(ov / scale)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n_out, n_in))


def downsample_area(img: GrayImage, factor: int) -> GrayImage:
    """Shrink by ``factor`` with area weighting (each output pixel is the mean of its footprint)."""
    if not isinstance(factor, (int, np.integer)) or factor <= 0:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return img
    h, w = img.height, img.width
    oh, ow = downsized_shape(h, w, factor)
    src = img.pixels
    if oh * factor == h and ow * factor == w:
        out = src.reshape(oh, factor, ow, factor).mean(axis=(1, 3), dtype=np.float64)
    else:
        ry = _area_matrix(h, oh)
        rx = _area_matrix(w, ow)
        out = ry @ src.astype(np.float64)
        out = (rx @ out.T).T
    return GrayImage(np.clip(_round_half_up(out), 0, 255).astype(np.uint8))


def _check_kernel_fits(img, size: int):
    if size > min(img.width, img.height):
        raise ValueError(f"kernel of size {size} is larger than the {img.width}x{img.height} image")


def convolve(img: GrayImage, k: Kernel) -> GrayImage:
    """True 2-D convolution (kernel flipped), rounded half up and clamped to [0, 255]."""
    _check_kernel_fits(img, k.size)
    r = k.size // 2
    kern = k.array()[::-1, ::-1]
    src = np.pad(img.pixels.astype(np.float64), r, mode="edge")
    h, w = img.height, img.width
    acc = np.zeros((h, w))
    for dy in range(k.size):
        for dx in range(k.size):
            wt = kern[dy, dx]
            if wt != 0.0:
                acc += wt * src[dy:dy + h, dx:dx + w]
    return GrayImage(np.clip(_round_half_up(acc), 0, 255).astype(np.uint8))


def median_filter(img: GrayImage, window: int = 5) -> GrayImage:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"median window must be odd, got {window}")
    return GrayImage(_backend.kernels.median_filter_u8(img.pixels, int(window)))


def threshold(img: GrayImage, t: int, invert: bool = False) -> BinaryImage:
    """``pixel >= t`` is foreground; ``invert`` makes dark ink the foreground instead."""
    if not 0 <= t <= 255:
        raise ValueError(f"threshold must lie in [0, 255], got {t}")
    fg = img.pixels >= t
    if invert:
        fg = ~fg
    return BinaryImage(fg)


def _box_count(a: np.ndarray, s: int) -> np.ndarray:
    """Number of ones in each s x s neighbourhood (edge replication)."""
    r = s // 2
    p = np.pad(a.astype(np.int32), r, mode="edge")
    c = np.cumsum(np.cumsum(p, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    h, w = a.shape
    return c[s:s + h, s:s + w] - c[:h, s:s + w] - c[s:s + h, :w] + c[:h, :w]


def dilate(img: BinaryImage, s: int = 3) -> BinaryImage:
    _check_odd(s)
    return BinaryImage(_box_count(img.pixels, s) >= 1)


def erode(img: BinaryImage, s: int = 3) -> BinaryImage:
    _check_odd(s)
    return BinaryImage(_box_count(img.pixels, s) >= s * s)


def _check_odd(s: int):
    if s < 1 or s % 2 == 0:
        raise ValueError(f"structuring element side must be odd, got {s}")


def morphological_close(img: BinaryImage, s: int = 3) -> BinaryImage:
    """``erode(dilate(f, s), s)`` with a full s x s square element."""
    return erode(dilate(img, s), s)
