"""Thermal frame stacks, raster flattening, and per-pixel standardization.

A recorded inspection is a stack of frames with shape ``(N_t, N_y, N_x)``.
For analysis each pixel's temporal signal becomes one row of a
``(P, N_t)`` matrix (``P = N_y * N_x``, row-major raster order) and is
standardized to zero temporal mean and unit sample standard deviation.

Sequences are stored on disk in the TSF container (see `load_sequence`).
All in-memory arithmetic is float64; file payloads are float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NonFiniteDataError, TsfFormatError, TsfTruncatedError

TSF_MAGIC = b"TSF1"
TSF_VERSION = 1
_HEADER = struct.Struct("<4sIIIId")  # magic, version, N_t, N_y, N_x, frame_rate_hz

# Rows with raw sample std below this are "dead": zero signal, excluded from division.
DEAD_PIXEL_SIGMA = 1e-8


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ThermalSequence:
    """Stack of thermograms, shape (N_t, N_y, N_x); frame_rate_hz is metadata only."""

    frames: np.ndarray
    frame_rate_hz: float = 25.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise ValueError(f"frames must be 3-D (N_t, N_y, N_x), got ndim={frames.ndim}")
        n_t, n_y, n_x = frames.shape
        if n_t < 2 or n_y < 1 or n_x < 1:
            raise ValueError(f"invalid dimensions (N_t={n_t}, N_y={n_y}, N_x={n_x}); need N_t >= 2 and N_y, N_x >= 1")
        if not np.isfinite(frames).all():
            raise NonFiniteDataError("sequence contains NaN or infinite samples")
        if not self.frame_rate_hz > 0:
            raise ValueError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")
        object.__setattr__(self, "frames", _frozen_array(frames))

    @property
    def n_t(self) -> int:
        return self.frames.shape[0]

    @property
    def n_y(self) -> int:
        return self.frames.shape[1]

    @property
    def n_x(self) -> int:
        return self.frames.shape[2]

    @property
    def image_shape(self) -> tuple[int, int]:
        return (self.frames.shape[1], self.frames.shape[2])

    @property
    def n_pixels(self) -> int:
        return self.frames.shape[1] * self.frames.shape[2]


@dataclass(frozen=True, eq=False)
class PixelMatrix:
    """Per-pixel temporal signals, shape (P, N_t); row n is pixel n = y*N_x + x."""

    data: np.ndarray
    image_shape: tuple[int, int]
    standardized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D (P, N_t), got ndim={data.ndim}")
        n_y, n_x = self.image_shape
        if data.shape[0] != n_y * n_x:
            raise ValueError(f"row count {data.shape[0]} does not match image shape {self.image_shape}")
        if not np.isfinite(data).all():
            raise NonFiniteDataError("pixel matrix contains NaN or infinite samples")
        object.__setattr__(self, "data", _frozen_array(data))
        object.__setattr__(self, "image_shape", (int(n_y), int(n_x)))

    @property
    def n_pixels(self) -> int:
        return self.data.shape[0]

    @property
    def n_t(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    """Per-pixel temporal mean/std used by `standardize`, plus dead-pixel indices."""

    mu: np.ndarray
    sigma: np.ndarray
    dead_pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen_array(self.mu))
        object.__setattr__(self, "sigma", _frozen_array(self.sigma))
        object.__setattr__(self, "dead_pixels", _frozen_array(self.dead_pixels, dtype=np.int64))


def load_sequence(path) -> ThermalSequence:
    """Read a TSF file.

    Layout (little-endian): magic ``TSF1``, u32 version (=1), u32 N_t, u32 N_y,
    u32 N_x, f64 frame rate in Hz, then ``N_t*N_y*N_x`` float32 samples in
    frame-major, row-major order.

    Raises:
        FileNotFoundError: missing file.
        TsfFormatError: bad magic, unsupported version, invalid header, or
            trailing bytes after the payload.
        TsfTruncatedError: payload shorter than the header claims.
        NonFiniteDataError: payload contains NaN/Inf samples.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        if raw[: len(TSF_MAGIC)] != TSF_MAGIC[: len(raw)]:
            raise TsfFormatError(f"{path}: not a TSF file (bad magic)")
        raise TsfTruncatedError(f"{path}: incomplete header ({len(raw)} bytes)")
    magic, version, n_t, n_y, n_x, rate = _HEADER.unpack_from(raw)
    if magic != TSF_MAGIC:
        raise TsfFormatError(f"{path}: not a TSF file (bad magic {magic!r})")
    if version != TSF_VERSION:
        raise TsfFormatError(f"{path}: unsupported TSF version {version}")
    if n_t < 2 or n_y < 1 or n_x < 1:
        raise TsfFormatError(f"{path}: header dimensions out of range (N_t={n_t}, N_y={n_y}, N_x={n_x})")
    if not (np.isfinite(rate) and rate > 0):
        raise TsfFormatError(f"{path}: invalid frame rate {rate}")
    count = n_t * n_y * n_x
    payload = raw[_HEADER.size:]
    if len(payload) < 4 * count:
        raise TsfTruncatedError(
            f"{path}: payload holds {len(payload) // 4} samples, header claims {count}"
        )
    if len(payload) > 4 * count:
        raise TsfFormatError(f"{path}: {len(payload) - 4 * count} trailing bytes after payload")
    samples = np.frombuffer(payload, dtype="<f4", count=count).astype(np.float64)
    if not np.isfinite(samples).all():
        raise NonFiniteDataError(f"{path}: payload contains non-finite samples")
    return ThermalSequence(samples.reshape(n_t, n_y, n_x), frame_rate_hz=rate)


def write_sequence(path, seq: ThermalSequence) -> None:
    """Write a TSF file (inverse of `load_sequence`; samples narrowed to float32)."""
    header = _HEADER.pack(TSF_MAGIC, TSF_VERSION, seq.n_t, seq.n_y, seq.n_x, seq.frame_rate_hz)
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def reshape_raster(seq: ThermalSequence) -> PixelMatrix:
    """Flatten a frame stack so that row n holds the time series of pixel n = y*N_x + x."""
    data = np.ascontiguousarray(seq.frames.reshape(seq.n_t, -1).T)
    return PixelMatrix(data, image_shape=seq.image_shape, standardized=False)


def to_frames(m: PixelMatrix) -> np.ndarray:
    """Inverse of `reshape_raster`: rebuild the (N_t, N_y, N_x) frame stack."""
    n_y, n_x = m.image_shape
    return np.ascontiguousarray(m.data.T).reshape(m.n_t, n_y, n_x)


def raster_unflatten(values, image_shape: tuple[int, int]) -> np.ndarray:
    """Reshape a length-P vector back into an (N_y, N_x) image in raster order."""
    values = np.asarray(values, dtype=np.float64)
    n_y, n_x = image_shape
    if values.ndim != 1 or values.size != n_y * n_x:
        raise ValueError(f"expected a length-{n_y * n_x} vector, got shape {values.shape}")
    return values.reshape(n_y, n_x)


def standardize(m: PixelMatrix) -> tuple[PixelMatrix, StandardizationStats]:
    """Standardize every row to temporal mean 0 and unit sample std (N_t - 1 denominator).

    Rows whose raw sample std falls below ``DEAD_PIXEL_SIGMA`` are zeroed
    instead of divided; their indices are recorded in the returned stats.
    """
    if m.standardized:
        raise ValueError("matrix is already standardized")
    if m.n_t < 2:
        raise ValueError("sample std undefined for N_t < 2")
    mu = m.data.mean(axis=1)
    sigma = m.data.std(axis=1, ddof=1)
    dead = sigma < DEAD_PIXEL_SIGMA
    divisor = np.where(dead, 1.0, sigma)
    out = (m.data - mu[:, None]) / divisor[:, None]
    out[dead] = 0.0
    stats = StandardizationStats(mu=mu, sigma=sigma, dead_pixels=np.flatnonzero(dead))
    return PixelMatrix(out, image_shape=m.image_shape, standardized=True), stats
