"""Canny edges with automatic thresholds, probabilistic Hough segments, and deskewing."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _backend
from .raster import GrayImage


@dataclass(frozen=True, eq=False)
class EdgeMap:
    edges: np.ndarray  # uint8 {0,1}, (h, w)

    def __post_init__(self):
        e = np.ascontiguousarray(self.edges, dtype=np.uint8)
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def width(self) -> int:
        return self.edges.shape[1]

    @property
    def height(self) -> int:
        return self.edges.shape[0]

    @property
    def count(self) -> int:
        return int(self.edges.sum(dtype=np.int64))


@dataclass(frozen=True)
class LineSegment:
    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if (self.x1, self.y1) == (self.x2, self.y2):
            raise ValueError("degenerate segment: endpoints coincide")

    @property
    def length(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)

    def angle(self) -> float:
        """Slope angle in degrees, folded into (-45, 45] relative to the nearest grid axis."""
        return normalize_angle(math.degrees(math.atan2(self.y1 - self.y2, self.x1 - self.x2)))


@dataclass(frozen=True)
class HoughConfig:
    rho: float = 1.0
    theta: float = 0.1           # degrees per accumulator column, sweep (0, 180]
    threshold: int = 30
    min_length: int = 300        # short segments carry +-1 px endpoint rounding
    max_gap: int = 25            # rotated thin lines lose edge pixels at each row step
    sample_fraction: float = 0.05
    max_lines: int = 400

    def __post_init__(self):
        for name in ("rho", "theta", "threshold", "min_length", "sample_fraction", "max_lines"):
            if not getattr(self, name) > 0:
                raise ValueError(f"HoughConfig.{name} must be positive")
        if self.max_gap < 0:
            raise ValueError("HoughConfig.max_gap must be >= 0")
        if self.sample_fraction > 1:
            raise ValueError("HoughConfig.sample_fraction must be <= 1")
        steps = 180.0 / self.theta
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("theta resolution must divide 180 degrees")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def normalize_angle(a: float) -> float:
    """Fold an angle in degrees into (-45, 45] by multiples of 90."""
    return a - 90.0 * math.ceil((a - 45.0) / 90.0)


# --- Canny ---------------------------------------------------------------

GAUSS_SIGMA = 1.4
GAUSS_SIZE = 5


def gaussian_weights(sigma: float = GAUSS_SIGMA, size: int = GAUSS_SIZE) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _median_u8(p: np.ndarray) -> float:
    """np.median for uint8 data through a histogram."""
    n = p.size
    if n == 0:
        raise ValueError("zero-dimension image")
    cum = np.cumsum(np.bincount(p.ravel(), minlength=256))
    lo = int(np.searchsorted(cum, (n - 1) // 2, side="right"))
    hi = int(np.searchsorted(cum, n // 2, side="right"))
    return (lo + hi) / 2.0


def auto_thresholds(img: GrayImage, sigma_fraction: float = 0.33) -> tuple[int, int]:
    """Median-relative hysteresis thresholds, clamped to the intensity range."""
    med = _median_u8(img.pixels)
    low = int(max(0.0, (1.0 - sigma_fraction) * med))
    high = int(min(255.0, (1.0 + sigma_fraction) * med))
    return low, high


def _composite_taps():
    g = gaussian_weights()
    return np.convolve(g, [1.0, 2.0, 1.0]), np.convolve(g, [1.0, 0.0, -1.0])


_SMOOTH, _DERIV = _composite_taps()
_DERIV_CORR = np.ascontiguousarray(_DERIV[::-1])
_TAN22 = math.tan(math.radians(22.5))
_TAN67 = math.tan(math.radians(67.5))


def gradients(img: GrayImage):
    """Gaussian-smoothed Sobel gradients ``(gx, gy)``, rows growing downward.

    The 5-tap Gaussian is folded into the Sobel taps, so each axis is a single
    7-tap pass with edge replication.
    """
    return _backend.kernels.gradients7(np.ascontiguousarray(img.pixels), _SMOOTH, _DERIV_CORR)


def direction_bins(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Quantise gradient direction to 0/45/90/135 degrees -> bins 0..3."""
    ax, ay = np.abs(gx), np.abs(gy)
    bins = np.full(gx.shape, 2, dtype=np.uint8)
    bins[ay <= ax * _TAN22] = 0
    diag = (ay > ax * _TAN22) & (ay < ax * _TAN67)
    bins[diag & ((gx > 0) == (gy > 0))] = 1
    bins[diag & ((gx > 0) != (gy > 0))] = 3
    return bins


def canny_auto(img: GrayImage, sigma_fraction: float = 0.33) -> EdgeMap:
    if not 0.0 < sigma_fraction < 1.0:
        raise ValueError(f"sigma_fraction must lie in (0, 1), got {sigma_fraction}")
    low, high = auto_thresholds(img, sigma_fraction)
    gx, gy = gradients(img)
    k = _backend.kernels
    nms = k.gradient_nms(np.ascontiguousarray(gx), np.ascontiguousarray(gy), _TAN22, _TAN67)
    return EdgeMap(k.hysteresis(nms, float(low), float(high)))


# --- Hough ---------------------------------------------------------------

def theta_table(cfg: HoughConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-column ``(cos/rho, sin/rho)`` for theta = n * res, n = 1 .. 180/res."""
    n = int(round(180.0 / cfg.theta))
    th = np.arange(1, n + 1, dtype=np.float64) * math.radians(cfg.theta)
    return np.cos(th) / cfg.rho, np.sin(th) / cfg.rho


def hough_probabilistic(edges: EdgeMap, cfg: HoughConfig = HoughConfig(), seed: int = 0) -> list[LineSegment]:
    """Progressive probabilistic Hough transform.

    Edge pixels are visited in a seeded random order. Only ``sample_fraction``
    of them vote; every edge pixel still counts when segments are walked out.
    A cell reaching ``threshold`` votes spawns a walk along its line in both
    directions, tolerating up to ``max_gap`` missing pixels; segments shorter
    than ``min_length`` (along the dominant axis) are discarded.
    """
    ys, xs = np.nonzero(edges.edges)
    if ys.size == 0:
        return []
    rng = np.random.default_rng(seed)
    order = rng.permutation(ys.size)
    n_vote = max(1, int(math.ceil(cfg.sample_fraction * ys.size)))
    order = order[:n_vote]
    ys = np.ascontiguousarray(ys[order], dtype=np.int64)
    xs = np.ascontiguousarray(xs[order], dtype=np.int64)
    ctab, stab = theta_table(cfg)
    h, w = edges.edges.shape
    numrho = int(round((2 * (w + h) + 1) / cfg.rho))
    raw = _backend.kernels.hough_ppht(
        edges.edges, ys, xs, ctab, stab, numrho,
        int(cfg.threshold), int(cfg.min_length), int(cfg.max_gap), int(cfg.max_lines),
    )
    return [LineSegment(*map(int, r)) for r in raw if (r[0], r[1]) != (r[2], r[3])]


@dataclass(frozen=True)
class RotationEstimate:
    angle: float
    n_segments: int
    no_lines: bool


def estimate_rotation_detail(img: GrayImage, cfg: HoughConfig = HoughConfig(), seed: int = 0,
                             sigma_fraction: float = 0.33) -> RotationEstimate:
    if img.width == 0 or img.height == 0:
        raise ValueError("zero-dimension image")
    segs = hough_probabilistic(canny_auto(img, sigma_fraction), cfg, seed)
    if not segs:
        return RotationEstimate(0.0, 0, True)
    return RotationEstimate(float(np.median([s.angle() for s in segs])), len(segs), False)


def estimate_rotation(img: GrayImage, cfg: HoughConfig = HoughConfig(), seed: int = 0):
    """Median grid-relative segment angle in degrees, plus a ``no_lines`` flag.

    A positive angle means the content is turned clockwise as displayed
    (rows grow downward); ``rotate(img, -angle)`` undoes it.
    """
    est = estimate_rotation_detail(img, cfg, seed)
    return est.angle, est.no_lines


def rotate(img: GrayImage, angle: float) -> GrayImage:
    """Turn the content by ``angle`` degrees clockwise as displayed.

    Bilinear sampling about the pixel-grid centre; uncovered pixels become white.
    """
    if angle == 0:
        return img
    a = math.radians(angle)
    c, s = math.cos(a), math.sin(a)
    h, w = img.height, img.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    # output (r, c) samples source R(-a) about the centre, in (row, col) order
    m = np.array([[c, -s], [s, c]])
    off = np.array([cy, cx]) - m @ np.array([cy, cx])
    out = ndimage.affine_transform(img.pixels.astype(np.float64), m, offset=off, order=1,
                                   mode="constant", cval=255.0, prefilter=False)
    return GrayImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def deskew(img: GrayImage, cfg: HoughConfig = HoughConfig(), seed: int = 0):
    angle, no_lines = estimate_rotation(img, cfg, seed)
    return rotate(img, -angle), angle, no_lines
