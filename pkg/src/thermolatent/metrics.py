"""Defect-visibility and segmentation metrics on scalar images.

Contrast and SNR compare a defect region against a sound region; IoU
compares a predicted mask against ground truth. Images are min-max
normalized to [0, 1] before contrast/SNR so that signed inputs (latent or
component images) produce bounded, comparable numbers; pass
``normalize=False`` to audit raw values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateRegionError, MaskError
from .pgmio import read_pgm

MASK_ROLES = ("defect", "sound", "prediction", "ground-truth")

# Sound-region sample std below this makes the SNR ratio meaningless.
SNR_SIGMA_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Boolean pixel-region mask with a declared role."""

    bits: np.ndarray
    role: str = "defect"

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.dtype != np.bool_:
            bits = bits != 0
        if bits.ndim != 2:
            raise MaskError(f"mask must be 2-D, got shape {bits.shape}")
        if self.role not in MASK_ROLES:
            raise MaskError(f"unknown mask role {self.role!r}")
        bits = bits.copy()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape


@dataclass
class DefectMetrics:
    """Contrast/SNR of one defect region against the shared sound region."""

    label: str
    contrast: float
    snr_db: float
    snr_degenerate: bool = False


def _finite_or_none(value):
    """Strict-JSON stand-in: NaN and infinities become null (flags carry the reason)."""
    if value is None or not math.isfinite(value):
        return None
    return value


@dataclass
class MetricReport:
    """Mean contrast/SNR over defects, optional IoU, and the per-defect breakdown."""

    contrast: float | None
    snr_db: float | None
    iou: float | None = None
    per_defect: list[DefectMetrics] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "contrast": _finite_or_none(self.contrast),
            "snr_db": _finite_or_none(self.snr_db),
            "iou": _finite_or_none(self.iou),
            "per_defect": [
                {
                    "label": d.label,
                    "contrast": _finite_or_none(d.contrast),
                    "snr_db": _finite_or_none(d.snr_db),
                    "snr_degenerate": d.snr_degenerate,
                }
                for d in self.per_defect
            ],
        }


def normalize_unit(img, constant_fill: float = 0.5) -> np.ndarray:
    """Min-max normalize an image to [0, 1]; constant images map to constant_fill."""
    img = np.asarray(img, dtype=np.float64)
    lo = img.min()
    hi = img.max()
    if hi == lo:
        return np.full_like(img, constant_fill)
    return (img - lo) / (hi - lo)


def _check_regions(img: np.ndarray, defect: RegionMask, sound: RegionMask) -> None:
    if defect.shape != img.shape or sound.shape != img.shape:
        raise MaskError(
            f"mask shapes {defect.shape}/{sound.shape} do not match image shape {img.shape}"
        )
    if defect.count == 0:
        raise MaskError("defect mask is empty")
    if sound.count == 0:
        raise MaskError("sound mask is empty")
    if np.any(defect.bits & sound.bits):
        raise MaskError("defect and sound masks overlap")


def contrast(img, defect: RegionMask, sound: RegionMask, normalize: bool = True) -> float:
    """|mean(defect) - mean(sound)| / (mean(defect) + mean(sound)) on the normalized image.

    Zero denominator (both region means zero) is defined as contrast 0.
    """
    img = np.asarray(img, dtype=np.float64)
    _check_regions(img, defect, sound)
    x = normalize_unit(img) if normalize else img
    mean_d = float(x[defect.bits].mean())
    mean_i = float(x[sound.bits].mean())
    den = mean_d + mean_i
    if den == 0.0:
        return 0.0
    return abs(mean_d - mean_i) / den


def snr_db(img, defect: RegionMask, sound: RegionMask, normalize: bool = True) -> float:
    """20*log10(|mean(defect) - mean(sound)| / std(sound)) on the normalized image.

    The sound std is the sample standard deviation (ddof=1), so the sound
    region needs at least two pixels. Equal region means return ``-inf``
    (degenerate); a near-constant sound region raises `DegenerateRegionError`.
    """
    img = np.asarray(img, dtype=np.float64)
    _check_regions(img, defect, sound)
    if sound.count < 2:
        raise MaskError("sound region needs at least 2 pixels for a sample std")
    x = normalize_unit(img) if normalize else img
    mean_d = float(x[defect.bits].mean())
    mean_i = float(x[sound.bits].mean())
    sigma_i = float(x[sound.bits].std(ddof=1))
    if sigma_i < SNR_SIGMA_FLOOR:
        raise DegenerateRegionError(f"sound region is uniform (std {sigma_i:.3g})")
    num = abs(mean_d - mean_i)
    if num == 0.0:
        return float("-inf")
    return 20.0 * math.log10(num / sigma_i)


def iou(pred: RegionMask, truth: RegionMask) -> float:
    """Intersection over union of two masks; two empty masks agree vacuously (1.0)."""
    if pred.shape != truth.shape:
        raise MaskError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    union = int(np.logical_or(pred.bits, truth.bits).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(pred.bits, truth.bits).sum())
    return inter / union


def score_image(
    img,
    defects: list[RegionMask] | RegionMask,
    sound: RegionMask,
    pred: RegionMask | None = None,
    truth: RegionMask | None = None,
    labels: list[str] | None = None,
    normalize: bool = True,
) -> MetricReport:
    """Per-defect contrast/SNR against a shared sound mask, their means, optional IoU."""
    if isinstance(defects, RegionMask):
        defects = [defects]
    if not defects:
        raise MaskError("need at least one defect mask")
    if labels is None:
        labels = [f"defect_{i + 1}" for i in range(len(defects))]
    if len(labels) != len(defects):
        raise ValueError(f"{len(labels)} labels for {len(defects)} defect masks")
    rows = []
    for label, dm in zip(labels, defects):
        c = contrast(img, dm, sound, normalize=normalize)
        try:
            s = snr_db(img, dm, sound, normalize=normalize)
            degenerate = not math.isfinite(s)
        except DegenerateRegionError:
            s = float("nan")
            degenerate = True
        rows.append(DefectMetrics(label=label, contrast=c, snr_db=s, snr_degenerate=degenerate))
    finite = [r.snr_db for r in rows if not r.snr_degenerate]
    mean_snr = sum(finite) / len(finite) if finite else float("nan")
    mean_contrast = sum(r.contrast for r in rows) / len(rows)
    iou_value = iou(pred, truth) if pred is not None and truth is not None else None
    return MetricReport(contrast=mean_contrast, snr_db=mean_snr, iou=iou_value, per_defect=rows)


def read_mask(path, role: str = "defect") -> RegionMask:
    """Load a mask from a PGM file; any nonzero sample counts as True."""
    return RegionMask(bits=read_pgm(path) != 0, role=role)


def masks_from_rects(rects, image_shape: tuple[int, int], role: str = "defect") -> list[RegionMask]:
    """Build masks from a JSON-style rectangle list: [{"x", "y", "w", "h"}, ...].

    ``x``/``y`` are the top-left column/row; rectangles are clipped to the image.
    """
    n_y, n_x = image_shape
    out = []
    for i, r in enumerate(rects):
        try:
            x, y, w, h = int(r["x"]), int(r["y"]), int(r["w"]), int(r["h"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MaskError(f"rectangle {i}: expected integer keys x, y, w, h") from exc
        if w < 1 or h < 1:
            raise MaskError(f"rectangle {i}: non-positive size {w}x{h}")
        bits = np.zeros((n_y, n_x), dtype=bool)
        bits[max(y, 0) : y + h, max(x, 0) : x + w] = True
        out.append(RegionMask(bits=bits, role=role))
    return out


def load_rect_masks(path, image_shape: tuple[int, int], role: str = "defect") -> list[RegionMask]:
    """Read a rectangle-list JSON file into masks."""
    rects = json.loads(Path(path).read_text())
    if not isinstance(rects, list):
        raise MaskError(f"{path}: expected a JSON list of rectangles")
    return masks_from_rects(rects, image_shape, role=role)
