"""Minimal PGM (P2/P5) reading and writing.

P5 files with maxval > 255 use two bytes per sample, most significant byte
first, per the Netpbm convention. Good enough for masks and for exporting
quantized component/latent images; not a general image library.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import PgmFormatError


def _tokenize_header(raw: bytes, n_tokens: int) -> tuple[list[bytes], int]:
    """Pull whitespace/comment-separated header tokens; return tokens and end offset."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < n_tokens:
        if i >= len(raw):
            raise PgmFormatError("unexpected end of file in PGM header")
        c = raw[i : i + 1]
        if c == b"#":
            while i < len(raw) and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace() and raw[j : j + 1] != b"#":
                j += 1
            tokens.append(raw[i:j])
            i = j
    return tokens, i


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 PGM file into a uint16 array of shape (height, width)."""
    raw = Path(path).read_bytes()
    if raw[:2] not in (b"P2", b"P5"):
        raise PgmFormatError(f"{path}: not a PGM file (magic {raw[:2]!r})")
    binary = raw[:2] == b"P5"
    tokens, offset = _tokenize_header(raw, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise PgmFormatError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise PgmFormatError(f"{path}: invalid PGM dimensions or maxval")
    count = width * height
    if binary:
        offset += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        itemsize = 2 if maxval > 255 else 1
        if len(raw) - offset < count * itemsize:
            raise PgmFormatError(f"{path}: truncated PGM payload")
        img = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    else:
        values = raw[offset:].split()
        if len(values) < count:
            raise PgmFormatError(f"{path}: truncated PGM payload")
        try:
            img = np.array([int(v) for v in values[:count]], dtype=np.uint32)
        except ValueError as exc:
            raise PgmFormatError(f"{path}: non-numeric PGM sample") from exc
    if img.max(initial=0) > maxval:
        raise PgmFormatError(f"{path}: sample exceeds maxval {maxval}")
    return img.astype(np.uint16).reshape(height, width)


def write_pgm(path, img, maxval: int | None = None) -> None:
    """Write an integer image as binary P5 (2 bytes MSB-first when maxval > 255)."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if np.issubdtype(img.dtype, np.bool_):
        img = img.astype(np.uint8) * 255
    if maxval is None:
        maxval = 255 if img.max(initial=0) <= 255 else 65535
    if img.min(initial=0) < 0 or img.max(initial=0) > maxval:
        raise ValueError("image values outside [0, maxval]")
    height, width = img.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    payload = img.astype(">u2" if maxval > 255 else "u1").tobytes()
    Path(path).write_bytes(header + payload)


def quantize_unit(img, maxval: int = 65535) -> np.ndarray:
    """Map a [0, 1] float image to integers 0..maxval (round-half-even, clipped)."""
    img = np.asarray(img, dtype=np.float64)
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    return q.astype(np.uint16 if maxval > 255 else np.uint8)
