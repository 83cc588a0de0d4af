"""File helpers: atomic writes and netpbm/PNG image I/O."""
from __future__ import annotations

import os
import re
import tempfile

import numpy as np


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# --- netpbm --------------------------------------------------------------

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def encode_pnm(a: np.ndarray) -> bytes:
    """Binary PGM (P5) for (h, w) uint8, PPM (P6) for (h, w, 3)."""
    a = np.ascontiguousarray(a, dtype=np.uint8)
    if a.ndim == 2:
        magic = b"P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot encode array of shape {a.shape} as netpbm")
    h, w = a.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode() + a.tobytes()


def decode_pnm(data: bytes) -> np.ndarray:
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if not m:
            raise ValueError("truncated netpbm header")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported netpbm magic {magic!r}; only P5/P6")
    if maxval != 255:
        raise ValueError("only 8-bit netpbm images are supported")
    pos += 1  # single whitespace byte after maxval
    ch = 1 if magic == b"P5" else 3
    n = w * h * ch
    body = data[pos:pos + n]
    if len(body) != n:
        raise ValueError("truncated netpbm pixel data")
    a = np.frombuffer(body, dtype=np.uint8)
    return a.reshape((h, w) if ch == 1 else (h, w, 3)).copy()


def read_image(path) -> np.ndarray:
    """uint8 array, (h, w) or (h, w, 3). PGM/PPM natively, PNG through Pillow."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] in (b"P5", b"P6"):
        return decode_pnm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            from PIL import Image
        except ImportError:
            raise RuntimeError("reading PNG needs Pillow (pip install Pillow)") from None
        import io
        with Image.open(io.BytesIO(data)) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im, dtype=np.uint8).copy()
    raise ValueError(f"{path}: unrecognised image format (expected PGM, PPM or PNG)")


def write_image(path, a: np.ndarray) -> None:
    path = os.fspath(path)
    if path.lower().endswith(".png"):
        try:
            from PIL import Image
        except ImportError:
            raise RuntimeError("writing PNG needs Pillow (pip install Pillow)") from None
        import io
        buf = io.BytesIO()
        Image.fromarray(np.ascontiguousarray(a, dtype=np.uint8)).save(buf, format="PNG")
        atomic_write_bytes(path, buf.getvalue())
    else:
        atomic_write_bytes(path, encode_pnm(a))
