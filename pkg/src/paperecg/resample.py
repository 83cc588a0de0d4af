"""DFT pair and spectral zero-padding upsampling (periodic interpolation)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# above this length the O(N^2) direct sum is replaced by the FFT
DIRECT_MAX = 512
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Spectrum:
    bins: np.ndarray   # complex, length n

    @property
    def n(self) -> int:
        return len(self.bins)


def dft_direct(x) -> np.ndarray:
    """Reference O(N^2) transform, X[k] = sum_n x[n] exp(-2 pi i k n / N)."""
    x = np.asarray(x, dtype=np.complex128)
    n = len(x)
    k = np.arange(n)
    # reduce k*n mod N before scaling so large N keeps full phase precision
    w = np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)
    return w @ x


def dft(x, direct: bool | None = None) -> Spectrum:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("dft needs a non-empty 1-D sequence")
    if direct is None:
        direct = x.size <= DIRECT_MAX
    return Spectrum(dft_direct(x) if direct else np.fft.fft(x))


def _check_real(X: np.ndarray, tol: float = SYMMETRY_TOL):
    n = len(X)
    mirror = np.conj(X[(-np.arange(n)) % n])
    scale = max(1.0, float(np.abs(X).max()))
    if float(np.abs(X - mirror).max()) > tol * scale:
        raise ValueError("non-real spectrum")


def idft(spec: Spectrum, direct: bool | None = None) -> np.ndarray:
    X = np.asarray(spec.bins, dtype=np.complex128)
    n = len(X)
    if n == 0:
        raise ValueError("empty spectrum")
    _check_real(X)
    if direct is None:
        direct = n <= DIRECT_MAX
    if direct:
        k = np.arange(n)
        x = (np.exp(2j * np.pi * (np.outer(k, k) % n) / n) @ X) / n
    else:
        x = np.fft.ifft(X)
    return x.real.copy()


def zeropad(X: np.ndarray, m: int) -> np.ndarray:
    """Insert ``m - N`` zeros at the folding frequency; even N splits the Nyquist bin."""
    n = len(X)
    out = np.zeros(m, dtype=np.complex128)
    if n % 2:
        h = (n + 1) // 2
        out[:h] = X[:h]
        out[m - (n - h):] = X[h:]
    else:
        h = n // 2
        out[:h] = X[:h]
        out[m - h + 1:] = X[h + 1:]
        if m > n:
            out[h] = X[h] / 2
            out[m - h] = X[h] / 2
        else:
            out[h] = X[h]
    return out


def upsample_zeropad(x, L: int = 8, direct: bool | None = None) -> np.ndarray:
    """Band-limited (periodic) interpolation to ``L * N`` samples; ``out[k*L] == x[k]``."""
    if not isinstance(L, (int, np.integer)) or L < 1:
        raise ValueError(f"upsampling factor must be an integer >= 1, got {L!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("upsampling needs at least two samples")
    if L == 1:
        return x.copy()
    n = x.size
    X = dft(x, direct).bins
    m = L * n
    P = zeropad(X, m) * L
    return idft(Spectrum(P), direct=None if direct is None else direct)


def upsample_gaps(gap, L: int) -> np.ndarray:
    """Gap flag per upsampled sample: set when either bracketing source sample is a gap."""
    gap = np.asarray(gap, dtype=bool)
    n = gap.size
    j = np.arange(n * L)
    lo = j // L
    hi = np.minimum(lo + (j % L != 0), n - 1)
    return gap[lo] | gap[hi]


def periodic_sinc_interp(x, L: int) -> np.ndarray:
    """Brute-force trigonometric interpolation at t = j / L (Dirichlet kernel).

    Matches ``upsample_zeropad`` including the split Nyquist term; used as an oracle.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    t = np.arange(n * L) / L
    d = t[:, None] - np.arange(n)[None, :]
    u = np.pi * d / n
    with np.errstate(divide="ignore", invalid="ignore"):
        if n % 2:
            k = np.sin(n * u) / (n * np.sin(u))
        else:
            # half-weight Nyquist term: cos(u) * sin(N u) / (N sin u)
            k = np.sin(n * u) * np.cos(u) / (n * np.sin(u))
    k[np.isclose(np.sin(u), 0.0, atol=1e-15)] = 1.0
    # exact lattice points (d integer multiple of N) take kernel value 1
    return k @ x
