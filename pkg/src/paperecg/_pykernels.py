"""Pure-Python/NumPy twins of the compiled kernels in ``_kernels.pyx``.

Same signatures, same outputs.  Used when the extension is not built, or when
``PAPERECG_BACKEND=python`` is set.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

NAME = "python"

# counter-clockwise as displayed (rows grow downward): E, NE, N, NW, W, SW, S, SE
DY = (0, -1, -1, -1, 0, 1, 1, 1)
DX = (1, 1, 0, -1, -1, -1, 0, 1)
_DIR = {(dy, dx): k for k, (dy, dx) in enumerate(zip(DY, DX))}

_EIGHT = np.ones((3, 3), dtype=bool)
_FOUR = ndimage.generate_binary_structure(2, 1)


def median_filter_u8(img: np.ndarray, window: int) -> np.ndarray:
    return ndimage.median_filter(img, size=window, mode="nearest")


def non_max_suppress(mag: np.ndarray, bins: np.ndarray) -> np.ndarray:
    h, w = mag.shape
    out = np.zeros_like(mag)
    if h < 3 or w < 3:
        return out
    c = mag[1:-1, 1:-1]
    b = bins[1:-1, 1:-1]
    # (a, b) neighbour pairs per bin; keep if m > a and m >= b
    pairs = {
        0: (mag[1:-1, :-2], mag[1:-1, 2:]),
        1: (mag[:-2, :-2], mag[2:, 2:]),
        2: (mag[:-2, 1:-1], mag[2:, 1:-1]),
        3: (mag[:-2, 2:], mag[2:, :-2]),
    }
    keep = np.zeros(c.shape, dtype=bool)
    for k, (na, nb) in pairs.items():
        keep |= (b == k) & (c > na) & (c >= nb)
    keep &= c > 0.0
    out[1:-1, 1:-1] = np.where(keep, c, 0.0)
    return out




def _corr7(a: np.ndarray, taps, axis: int) -> np.ndarray:
    r = len(taps) // 2
    n = a.shape[axis]
    acc = np.zeros(a.shape, dtype=np.float64)
    for j, t in enumerate(taps):
        idx = np.clip(np.arange(n) + j - r, 0, n - 1)
        acc = acc + t * np.take(a, idx, axis=axis)
    return acc


def gradients7(a: np.ndarray, smooth: np.ndarray, deriv: np.ndarray):
    a = a.astype(np.float64)
    gx = _corr7(_corr7(a, smooth, 0), deriv, 1)
    gy = _corr7(_corr7(a, deriv, 0), smooth, 1)
    return gx, gy

def gradient_nms(gx: np.ndarray, gy: np.ndarray, tan22: float, tan67: float) -> np.ndarray:
    mag = np.sqrt(gx * gx + gy * gy)
    ax, ay = np.abs(gx), np.abs(gy)
    bins = np.full(gx.shape, 2, dtype=np.uint8)
    bins[ay <= ax * tan22] = 0
    diag = (ay > ax * tan22) & (ay < ax * tan67)
    bins[diag & ((gx > 0) == (gy > 0))] = 1
    bins[diag & ((gx > 0) != (gy > 0))] = 3
    return non_max_suppress(mag, bins)

def hysteresis(nms: np.ndarray, low: float, high: float) -> np.ndarray:
    cand = nms > low
    labels, n = ndimage.label(cand, structure=_EIGHT)
    if n == 0:
        return np.zeros(nms.shape, dtype=np.uint8)
    strong = np.zeros(n + 1, dtype=bool)
    strong[np.unique(labels[nms > high])] = True
    strong[0] = False
    return strong[labels].astype(np.uint8)


def label_components(img: np.ndarray, connectivity: int):
    structure = _EIGHT if connectivity == 8 else _FOUR
    labels, n = ndimage.label(img != 0, structure=structure)
    labels = labels.astype(np.int32)
    if n:
        flat = labels.ravel()
        nz = np.flatnonzero(flat)
        first = np.full(n + 1, flat.size, dtype=np.int64)
        np.minimum.at(first, flat[nz], nz)
        order = np.argsort(first[1:], kind="stable")
        remap = np.zeros(n + 1, dtype=np.int32)
        remap[order + 1] = np.arange(1, n + 1, dtype=np.int32)
        labels = remap[labels]
    return labels, int(n)


def trace_borders(img: np.ndarray):
    h, w = img.shape
    f = np.zeros((h + 2, w + 2), dtype=np.int64)
    f[1:-1, 1:-1] = img
    f = f.tolist()
    H, W = h + 2, w + 2
    nbd = 1
    holes = [True]
    parents = [-1]
    result = []
    for i in range(1, H - 1):
        lnbd = 1
        row = f[i]
        for j in range(1, W - 1):
            v = row[j]
            if v == 0:
                continue
            if v == 1 and row[j - 1] == 0:
                is_hole = False
                i2, j2 = i, j - 1
            elif v >= 1 and row[j + 1] == 0:
                is_hole = True
                i2, j2 = i, j + 1
                if v > 1:
                    lnbd = v
            else:
                if v != 1:
                    lnbd = abs(v)
                continue
            nbd += 1
            pa = parents[lnbd - 1] if is_hole == holes[lnbd - 1] else lnbd
            holes.append(is_hole)
            parents.append(pa)
            d2 = _DIR[(i2 - i, j2 - j)]
            found = None
            for k in range(1, 9):
                d = (d2 - k) & 7
                if f[i + DY[d]][j + DX[d]] != 0:
                    found = (i + DY[d], j + DX[d])
                    break
            if found is None:
                f[i][j] = -nbd
                result.append((np.array([[j - 1, i - 1]], dtype=np.int32), is_hole, pa))
            else:
                i1, j1 = found
                i2, j2 = i1, j1
                i3, j3 = i, j
                pts = []
                while True:
                    pts.append((j3 - 1, i3 - 1))
                    d2 = _DIR[(i2 - i3, j2 - j3)]
                    east_zero = False
                    for k in range(1, 9):
                        d = (d2 + k) & 7
                        i4, j4 = i3 + DY[d], j3 + DX[d]
                        if f[i4][j4] != 0:
                            break
                        if d == 0:
                            east_zero = True
                    if east_zero:
                        f[i3][j3] = -nbd
                    elif f[i3][j3] == 1:
                        f[i3][j3] = nbd
                    if i4 == i and j4 == j and i3 == i1 and j3 == j1:
                        break
                    i2, j2 = i3, j3
                    i3, j3 = i4, j4
                result.append((np.array(pts, dtype=np.int32), is_hole, pa))
            if f[i][j] != 1:
                lnbd = abs(f[i][j])
    return [(p, hole, pa - 2 if pa >= 2 else -1) for p, hole, pa in result]


def hough_ppht(edges, ys, xs, ctab, stab, numrho, threshold, line_length, line_gap, max_lines):
    h, w = edges.shape
    ctab = np.asarray(ctab, dtype=np.float64)
    stab = np.asarray(stab, dtype=np.float64)
    numangle = ctab.shape[0]
    rows = np.arange(numangle)
    offset = (numrho - 1) // 2
    mask = np.array(edges, dtype=np.uint8, copy=True)
    voted = np.zeros((h, w), dtype=bool)
    acc = np.zeros((numangle, numrho), dtype=np.int32)
    shift = 16
    lines = []

    def cells(x, y):
        return np.floor(x * ctab + y * stab + 0.5).astype(np.int64) + offset

    def walk(x, y, dx, dy, xflag):
        while True:
            if xflag:
                j1, i1 = x, y >> shift
            else:
                j1, i1 = x >> shift, y
            if j1 < 0 or j1 >= w or i1 < 0 or i1 >= h:
                return
            yield i1, j1
            x += dx
            y += dy

    for py, px in zip(np.asarray(ys).tolist(), np.asarray(xs).tolist()):
        if not mask[py, px]:
            continue
        r = cells(px, py)
        acc[rows, r] += 1
        vals = acc[rows, r]
        voted[py, px] = True
        max_n = int(np.argmax(vals))
        if vals[max_n] < threshold:
            continue
        a = -float(stab[max_n])
        b = float(ctab[max_n])
        x0, y0 = px, py
        if abs(a) > abs(b):
            xflag = True
            dx0 = 1 if a > 0 else -1
            dy0 = int(math.floor(b * (1 << shift) / abs(a) + 0.5))
            y0 = (y0 << shift) + (1 << (shift - 1))
        else:
            xflag = False
            dy0 = 1 if b > 0 else -1
            dx0 = int(math.floor(a * (1 << shift) / abs(b) + 0.5))
            x0 = (x0 << shift) + (1 << (shift - 1))
        ends = [[px, py], [px, py]]
        for k in range(2):
            sgn = 1 if k == 0 else -1
            gap = 0
            for i1, j1 in walk(x0, y0, sgn * dx0, sgn * dy0, xflag):
                if mask[i1, j1]:
                    gap = 0
                    ends[k] = [j1, i1]
                else:
                    gap += 1
                    if gap > line_gap:
                        break
        good = (abs(ends[1][0] - ends[0][0]) >= line_length
                or abs(ends[1][1] - ends[0][1]) >= line_length)
        for k in range(2):
            sgn = 1 if k == 0 else -1
            for i1, j1 in walk(x0, y0, sgn * dx0, sgn * dy0, xflag):
                if mask[i1, j1]:
                    if good and voted[i1, j1]:
                        acc[rows, cells(j1, i1)] -= 1
                        voted[i1, j1] = False
                    mask[i1, j1] = 0
                if i1 == ends[k][1] and j1 == ends[k][0]:
                    break
        if good:
            lines.append((ends[0][0], ends[0][1], ends[1][0], ends[1][1]))
            if len(lines) >= max_lines:
                break
    if not lines:
        return np.zeros((0, 4), dtype=np.int32)
    return np.array(lines, dtype=np.int32)


def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm_forward(xwb: np.ndarray, U: np.ndarray):
    T, G4 = xwb.shape
    H = G4 // 4
    hs = np.zeros((T + 1, H))
    cs = np.zeros((T + 1, H))
    gates = np.empty((T, G4))
    for t in range(T):
        z = U @ hs[t] + xwb[t]
        g = gates[t]
        g[: 3 * H] = _sig(z[: 3 * H])
        g[3 * H:] = np.tanh(z[3 * H:])
        cs[t + 1] = g[:H] * cs[t] + g[H:2 * H] * g[3 * H:]
        hs[t + 1] = g[2 * H:3 * H] * np.tanh(cs[t + 1])
    return hs, cs, gates


def lstm_backward(gates: np.ndarray, cs: np.ndarray, U: np.ndarray, dh_ext: np.ndarray):
    T, G4 = gates.shape
    H = G4 // 4
    dz = np.zeros((T, G4))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        f, i, o, g = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dh = dh_ext[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz[t, :H] = dc * cs[t] * f * (1.0 - f)
        dz[t, H:2 * H] = dc * g * i * (1.0 - i)
        dz[t, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[t, 3 * H:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = U.T @ dz[t]
    return dz
