# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a twin with the same signature in ``_pykernels``;
``_backend`` picks one at import time.  The integer-valued kernels (median,
NMS, hysteresis, labeling, border following, Hough) are required to agree
bit-for-bit with the Python twin; the LSTM kernels agree to rounding.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh, floor, fabs, sqrt
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

NAME = "compiled"

cdef int DY[8]
cdef int DX[8]
# counter-clockwise as displayed (rows grow downward): E, NE, N, NW, W, SW, S, SE
DY[:] = [0, -1, -1, -1, 0, 1, 1, 1]
DX[:] = [1, 1, 0, -1, -1, -1, 0, 1]


cdef inline void _select(unsigned char* buf, int n, int k) nogil:
    # in-place quickselect: buf[k] becomes the k-th smallest
    cdef int lo = 0, hi = n - 1, i, j
    cdef unsigned char pivot, tmp
    while lo < hi:
        pivot = buf[(lo + hi) >> 1]
        i = lo
        j = hi
        while i <= j:
            while buf[i] < pivot:
                i += 1
            while buf[j] > pivot:
                j -= 1
            if i <= j:
                tmp = buf[i]; buf[i] = buf[j]; buf[j] = tmp
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            return


def median_filter_u8(const unsigned char[:, ::1] img, int window):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef int r = window // 2
    cdef int n = window * window
    out = np.empty((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] o = out
    cdef unsigned char* buf = <unsigned char*> malloc(n)
    cdef Py_ssize_t y, x, yy, xx
    cdef int dy, dx, m
    try:
        with nogil:
            for y in range(h):
                for x in range(w):
                    m = 0
                    for dy in range(-r, r + 1):
                        yy = y + dy
                        if yy < 0:
                            yy = 0
                        elif yy >= h:
                            yy = h - 1
                        for dx in range(-r, r + 1):
                            xx = x + dx
                            if xx < 0:
                                xx = 0
                            elif xx >= w:
                                xx = w - 1
                            buf[m] = img[yy, xx]
                            m += 1
                    _select(buf, n, n // 2)
                    o[y, x] = buf[n // 2]
    finally:
        free(buf)
    return out


def non_max_suppress(const double[:, ::1] mag, const unsigned char[:, ::1] bins):
    cdef Py_ssize_t h = mag.shape[0], w = mag.shape[1], y, x
    out = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double m, a, b
    with nogil:
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                m = mag[y, x]
                if m <= 0.0:
                    continue
                if bins[y, x] == 0:
                    a = mag[y, x - 1]; b = mag[y, x + 1]
                elif bins[y, x] == 1:
                    a = mag[y - 1, x - 1]; b = mag[y + 1, x + 1]
                elif bins[y, x] == 2:
                    a = mag[y - 1, x]; b = mag[y + 1, x]
                else:
                    a = mag[y - 1, x + 1]; b = mag[y + 1, x - 1]
                if m > a and m >= b:
                    o[y, x] = m
    return out


def gradients7(const unsigned char[:, ::1] a, const double[::1] smooth, const double[::1] deriv):
    """Separable 7-tap correlations with edge replication.

    gx = deriv along columns of (smooth along rows); gy the transpose. Taps
    are summed in index order so the NumPy twin matches bit for bit.
    """
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1], y, x, j, q
    cdef Py_ssize_t r = smooth.shape[0] // 2, n = smooth.shape[0]
    vs_a = np.empty((h, w), dtype=np.float64)   # smooth along y
    hs_a = np.empty((h, w), dtype=np.float64)   # smooth along x
    vd_a = np.empty((h, w), dtype=np.float64)   # deriv along y
    gx_a = np.empty((h, w), dtype=np.float64)
    gy_a = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] vs = vs_a, hs = hs_a, vd = vd_a, gx = gx_a, gy = gy_a
    cdef double accs, accd
    with nogil:
        for y in range(h):
            if r <= y < h - r:
                for x in range(w):
                    accs = 0.0
                    accd = 0.0
                    for j in range(n):
                        accs = accs + smooth[j] * a[y + j - r, x]
                        accd = accd + deriv[j] * a[y + j - r, x]
                    vs[y, x] = accs
                    vd[y, x] = accd
                continue
            for x in range(w):
                accs = 0.0
                accd = 0.0
                for j in range(n):
                    q = y + j - r
                    if q < 0:
                        q = 0
                    elif q >= h:
                        q = h - 1
                    accs = accs + smooth[j] * a[q, x]
                    accd = accd + deriv[j] * a[q, x]
                vs[y, x] = accs
                vd[y, x] = accd
        for y in range(h):
            for x in range(w):
                accs = 0.0
                accd = 0.0
                if r <= x < w - r:
                    for j in range(n):
                        accs = accs + deriv[j] * vs[y, x + j - r]
                        accd = accd + smooth[j] * vd[y, x + j - r]
                else:
                    for j in range(n):
                        q = x + j - r
                        if q < 0:
                            q = 0
                        elif q >= w:
                            q = w - 1
                        accs = accs + deriv[j] * vs[y, q]
                        accd = accd + smooth[j] * vd[y, q]
                gx[y, x] = accs
                gy[y, x] = accd
    return gx_a, gy_a


def gradient_nms(const double[:, ::1] gx, const double[:, ::1] gy, double tan22, double tan67):
    """Magnitude, 4-way direction bin and non-maximum suppression in one pass."""
    cdef Py_ssize_t h = gx.shape[0], w = gx.shape[1], y, x
    mag_a = np.empty((h, w), dtype=np.float64)
    out = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] mag = mag_a
    cdef double[:, ::1] o = out
    cdef double ax, ay, a, b, m, na, nb
    with nogil:
        for y in range(h):
            for x in range(w):
                a = gx[y, x]
                b = gy[y, x]
                mag[y, x] = sqrt(a * a + b * b)
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                m = mag[y, x]
                if m <= 0.0:
                    continue
                a = gx[y, x]
                b = gy[y, x]
                ax = fabs(a)
                ay = fabs(b)
                if ay <= ax * tan22:
                    na = mag[y, x - 1]; nb = mag[y, x + 1]
                elif ay < ax * tan67:
                    if (a > 0) == (b > 0):
                        na = mag[y - 1, x - 1]; nb = mag[y + 1, x + 1]
                    else:
                        na = mag[y - 1, x + 1]; nb = mag[y + 1, x - 1]
                else:
                    na = mag[y - 1, x]; nb = mag[y + 1, x]
                if m > na and m >= nb:
                    o[y, x] = m
    return out

def hysteresis(const double[:, ::1] nms, double low, double high):
    cdef Py_ssize_t h = nms.shape[0], w = nms.shape[1], y, x, yy, xx
    cdef Py_ssize_t n = h * w, top = 0, p
    out = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] o = out
    cdef Py_ssize_t* stack = <Py_ssize_t*> malloc(max(n, 1) * sizeof(Py_ssize_t))
    cdef int k
    try:
        with nogil:
            for y in range(h):
                for x in range(w):
                    if nms[y, x] > high and o[y, x] == 0:
                        o[y, x] = 1
                        stack[0] = y * w + x
                        top = 1
                        while top > 0:
                            top -= 1
                            p = stack[top]
                            for k in range(8):
                                yy = p // w + DY[k]
                                xx = p % w + DX[k]
                                if yy < 0 or yy >= h or xx < 0 or xx >= w:
                                    continue
                                if o[yy, xx] == 0 and nms[yy, xx] > low:
                                    o[yy, xx] = 1
                                    stack[top] = yy * w + xx
                                    top += 1
    finally:
        free(stack)
    return out


cdef inline Py_ssize_t _find(Py_ssize_t* parent, Py_ssize_t a) nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def label_components(const unsigned char[:, ::1] img, int connectivity):
    """Two-pass union-find labeling; labels numbered by first pixel in raster order."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], y, x
    labels = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] lab = labels
    cdef Py_ssize_t cap = h * w // 2 + 2
    cdef Py_ssize_t* parent = <Py_ssize_t*> malloc(cap * sizeof(Py_ssize_t))
    cdef Py_ssize_t* remap
    cdef Py_ssize_t nxt = 1, a, b, ra, rb, cur, final_n = 0
    cdef int k, nk
    cdef int ndy[4]
    cdef int ndx[4]
    if connectivity == 8:
        nk = 4
        ndy[0] = 0; ndx[0] = -1
        ndy[1] = -1; ndx[1] = -1
        ndy[2] = -1; ndx[2] = 0
        ndy[3] = -1; ndx[3] = 1
    else:
        nk = 2
        ndy[0] = 0; ndx[0] = -1
        ndy[1] = -1; ndx[1] = 0
    try:
        with nogil:
            for y in range(h):
                for x in range(w):
                    if img[y, x] == 0:
                        continue
                    cur = 0
                    for k in range(nk):
                        a = y + ndy[k]
                        b = x + ndx[k]
                        if a < 0 or b < 0 or b >= w:
                            continue
                        if lab[a, b] == 0:
                            continue
                        if cur == 0:
                            cur = lab[a, b]
                        else:
                            ra = _find(parent, cur)
                            rb = _find(parent, lab[a, b])
                            if ra < rb:
                                parent[rb] = ra
                            elif rb < ra:
                                parent[ra] = rb
                    if cur == 0:
                        cur = nxt
                        parent[nxt] = nxt
                        nxt += 1
                    lab[y, x] = <int> cur
        remap = <Py_ssize_t*> malloc(nxt * sizeof(Py_ssize_t))
        try:
            with nogil:
                # roots are the smallest provisional label of their set, so visiting
                # provisional labels in increasing order yields raster order of first pixels
                for a in range(1, nxt):
                    ra = _find(parent, a)
                    if ra == a:
                        final_n += 1
                        remap[a] = final_n
                    else:
                        remap[a] = remap[ra]
                for y in range(h):
                    for x in range(w):
                        if lab[y, x] != 0:
                            lab[y, x] = <int> remap[lab[y, x]]
        finally:
            free(remap)
    finally:
        free(parent)
    return labels, int(final_n)


def trace_borders(const unsigned char[:, ::1] img):
    """Border following on a 0/1 image (8-connected foreground, 4-connected holes).

    Returns a list of ``(points, is_hole, parent)`` where points is an (n, 2)
    int32 array of (x, y), and parent indexes the returned list (-1 = none).
    """
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t H = h + 2, W = w + 2
    fpad = np.zeros((H, W), dtype=np.int32)
    fpad[1:-1, 1:-1] = np.asarray(img, dtype=np.int32)
    cdef int[:, ::1] f = fpad
    cdef Py_ssize_t i, j, i1, j1, i2, j2, i3, j3, i4, j4, y, x
    cdef int nbd = 1, lnbd, d, d2, k, pa
    cdef bint found, east_zero, is_hole
    # NBD 1 is the image frame, treated as a hole border without parent
    holes = [True]
    parents = [-1]
    result = []
    cdef list pts
    for i in range(1, H - 1):
        lnbd = 1
        for j in range(1, W - 1):
            if f[i, j] == 0:
                continue
            is_hole = False
            if f[i, j] == 1 and f[i, j - 1] == 0:
                i2 = i
                j2 = j - 1
            elif f[i, j] >= 1 and f[i, j + 1] == 0:
                is_hole = True
                i2 = i
                j2 = j + 1
                if f[i, j] > 1:
                    lnbd = f[i, j]
            else:
                if f[i, j] != 1:
                    lnbd = abs(f[i, j])
                continue
            nbd += 1
            if is_hole == holes[lnbd - 1]:
                pa = parents[lnbd - 1]
            else:
                pa = lnbd
            holes.append(is_hole)
            parents.append(pa)
            # 3.1: clockwise search around (i, j) starting next to (i2, j2)
            d2 = _dir(i2 - i, j2 - j)
            found = False
            for k in range(1, 9):
                d = (d2 - k) & 7
                i1 = i + DY[d]
                j1 = j + DX[d]
                if f[i1, j1] != 0:
                    found = True
                    break
            if not found:
                f[i, j] = -nbd
                result.append((np.array([[j - 1, i - 1]], dtype=np.int32), is_hole, pa))
            else:
                pts = []
                i2 = i1
                j2 = j1
                i3 = i
                j3 = j
                while True:
                    pts.append((j3 - 1, i3 - 1))
                    d2 = _dir(i2 - i3, j2 - j3)
                    east_zero = False
                    for k in range(1, 9):
                        d = (d2 + k) & 7
                        i4 = i3 + DY[d]
                        j4 = j3 + DX[d]
                        if f[i4, j4] != 0:
                            break
                        if d == 0:
                            east_zero = True
                    if east_zero:
                        f[i3, j3] = -nbd
                    elif f[i3, j3] == 1:
                        f[i3, j3] = nbd
                    if i4 == i and j4 == j and i3 == i1 and j3 == j1:
                        break
                    i2 = i3
                    j2 = j3
                    i3 = i4
                    j3 = j4
                result.append((np.array(pts, dtype=np.int32), is_hole, pa))
            if f[i, j] != 1:
                lnbd = abs(f[i, j])
    out = []
    for pts_arr, hole, pa in result:
        out.append((pts_arr, hole, pa - 2 if pa >= 2 else -1))
    return out


cdef inline int _dir(Py_ssize_t dy, Py_ssize_t dx):
    cdef int k
    for k in range(8):
        if DY[k] == dy and DX[k] == dx:
            return k
    return -1


def hough_ppht(const unsigned char[:, ::1] edges, const long long[:] ys, const long long[:] xs,
               const double[:] ctab, const double[:] stab, int numrho,
               int threshold, int line_length, int line_gap, int max_lines):
    """Progressive probabilistic Hough transform over the given point order."""
    cdef Py_ssize_t h = edges.shape[0], w = edges.shape[1]
    cdef int numangle = ctab.shape[0]
    mask_arr = np.array(edges, dtype=np.uint8, copy=True)
    voted_arr = np.zeros((h, w), dtype=np.uint8)
    acc_arr = np.zeros((numangle, numrho), dtype=np.int32)
    cdef unsigned char[:, ::1] mask = mask_arr
    cdef unsigned char[:, ::1] voted = voted_arr
    cdef int[:, ::1] acc = acc_arr
    cdef Py_ssize_t npts = ys.shape[0], p
    cdef int shift = 16, n, r, val, max_val, max_n, offset = (numrho - 1) // 2
    cdef long long x0, y0, dx0, dy0, x, y, dx, dy
    cdef long long i1, j1, py, px
    cdef long long ends[2][2]
    cdef int gap, k, xflag
    cdef double a, b
    cdef bint good
    lines = []
    for p in range(npts):
        py = ys[p]
        px = xs[p]
        if mask[py, px] == 0:
            continue
        max_val = threshold - 1
        max_n = 0
        for n in range(numangle):
            r = <int> floor(px * ctab[n] + py * stab[n] + 0.5) + offset
            acc[n, r] += 1
            val = acc[n, r]
            if max_val < val:
                max_val = val
                max_n = n
        voted[py, px] = 1
        if max_val < threshold:
            continue
        a = -stab[max_n]
        b = ctab[max_n]
        x0 = px
        y0 = py
        if fabs(a) > fabs(b):
            xflag = 1
            dx0 = 1 if a > 0 else -1
            dy0 = <long long> floor(b * (1 << shift) / fabs(a) + 0.5)
            y0 = (y0 << shift) + (1 << (shift - 1))
        else:
            xflag = 0
            dy0 = 1 if b > 0 else -1
            dx0 = <long long> floor(a * (1 << shift) / fabs(b) + 0.5)
            x0 = (x0 << shift) + (1 << (shift - 1))
        for k in range(2):
            gap = 0
            x = x0
            y = y0
            dx = dx0 if k == 0 else -dx0
            dy = dy0 if k == 0 else -dy0
            ends[k][0] = px
            ends[k][1] = py
            while True:
                if xflag:
                    j1 = x
                    i1 = y >> shift
                else:
                    j1 = x >> shift
                    i1 = y
                if j1 < 0 or j1 >= w or i1 < 0 or i1 >= h:
                    break
                if mask[i1, j1]:
                    gap = 0
                    ends[k][0] = j1
                    ends[k][1] = i1
                else:
                    gap += 1
                    if gap > line_gap:
                        break
                x += dx
                y += dy
        good = (abs(ends[1][0] - ends[0][0]) >= line_length
                or abs(ends[1][1] - ends[0][1]) >= line_length)
        for k in range(2):
            x = x0
            y = y0
            dx = dx0 if k == 0 else -dx0
            dy = dy0 if k == 0 else -dy0
            while True:
                if xflag:
                    j1 = x
                    i1 = y >> shift
                else:
                    j1 = x >> shift
                    i1 = y
                if j1 < 0 or j1 >= w or i1 < 0 or i1 >= h:
                    break
                if mask[i1, j1]:
                    if good and voted[i1, j1]:
                        for n in range(numangle):
                            r = <int> floor(j1 * ctab[n] + i1 * stab[n] + 0.5) + offset
                            acc[n, r] -= 1
                        voted[i1, j1] = 0
                    mask[i1, j1] = 0
                if i1 == ends[k][1] and j1 == ends[k][0]:
                    break
                x += dx
                y += dy
        if good:
            lines.append((ends[0][0], ends[0][1], ends[1][0], ends[1][1]))
            if len(lines) >= max_lines:
                break
    if not lines:
        return np.zeros((0, 4), dtype=np.int32)
    return np.array(lines, dtype=np.int32)


cdef inline double _sig(double z) nogil:
    return 1.0 / (1.0 + exp(-z))


def lstm_forward(const double[:, ::1] xwb, const double[:, ::1] U):
    """Unrolled LSTM layer.

    ``xwb[t]`` holds ``W x_t + b`` for the stacked gates (f, i, o, g).  Returns
    hidden states and cells with a leading zero row, plus gate activations.
    """
    cdef int T = xwb.shape[0], G4 = xwb.shape[1], H = G4 // 4
    hs_arr = np.zeros((T + 1, H), dtype=np.float64)
    cs_arr = np.zeros((T + 1, H), dtype=np.float64)
    g_arr = np.empty((T, G4), dtype=np.float64)
    cdef double[:, ::1] hs = hs_arr
    cdef double[:, ::1] cs = cs_arr
    cdef double[:, ::1] gates = g_arr
    cdef int t, k, inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char trans = b'T'
    cdef double fg, ig, og, gg, c
    with nogil:
        for t in range(T):
            # gates[t] = U h_{t-1}; U is row-major (4H x H) == column-major (H x 4H)
            dgemv(&trans, &H, &G4, &one, <double*> &U[0, 0], &H, &hs[t, 0], &inc, &zero, &gates[t, 0], &inc)
            for k in range(H):
                fg = _sig(gates[t, k] + xwb[t, k])
                ig = _sig(gates[t, H + k] + xwb[t, H + k])
                og = _sig(gates[t, 2 * H + k] + xwb[t, 2 * H + k])
                gg = tanh(gates[t, 3 * H + k] + xwb[t, 3 * H + k])
                gates[t, k] = fg
                gates[t, H + k] = ig
                gates[t, 2 * H + k] = og
                gates[t, 3 * H + k] = gg
                c = fg * cs[t, k] + ig * gg
                cs[t + 1, k] = c
                hs[t + 1, k] = og * tanh(c)
    return hs_arr, cs_arr, g_arr


def lstm_backward(const double[:, ::1] gates, const double[:, ::1] cs,
                  const double[:, ::1] U, const double[:, ::1] dh_ext):
    """Backpropagate through one unrolled layer; returns pre-activation gradients dZ."""
    cdef int T = gates.shape[0], G4 = gates.shape[1], H = G4 // 4
    dz_arr = np.zeros((T, G4), dtype=np.float64)
    cdef double[:, ::1] dz = dz_arr
    dh_next_arr = np.zeros(H, dtype=np.float64)
    dc_next_arr = np.zeros(H, dtype=np.float64)
    cdef double[::1] dh_next = dh_next_arr
    cdef double[::1] dc_next = dc_next_arr
    cdef int t, k, inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char notrans = b'N'
    cdef double fg, ig, og, gg, tc, dh, dc
    with nogil:
        for t in range(T - 1, -1, -1):
            for k in range(H):
                fg = gates[t, k]
                ig = gates[t, H + k]
                og = gates[t, 2 * H + k]
                gg = gates[t, 3 * H + k]
                tc = tanh(cs[t + 1, k])
                dh = dh_ext[t, k] + dh_next[k]
                dc = dh * og * (1.0 - tc * tc) + dc_next[k]
                dz[t, k] = dc * cs[t, k] * fg * (1.0 - fg)
                dz[t, H + k] = dc * gg * ig * (1.0 - ig)
                dz[t, 2 * H + k] = dh * tc * og * (1.0 - og)
                dz[t, 3 * H + k] = dc * ig * (1.0 - gg * gg)
                dc_next[k] = dc * fg
            # dh_next = U^T dz_t
            dgemv(&notrans, &H, &G4, &one, <double*> &U[0, 0], &H, &dz[t, 0], &inc, &zero, &dh_next[0], &inc)
    return dz_arr
