"""Truncated PCA of standardized pixel matrices via a Gram-matrix eigensolver.

The decomposition works on the (N_t, N_t) Gram matrix of the standardized
pixel matrix rather than on the (P, N_t) matrix itself: frame counts are
small next to pixel counts, so a dense cyclic Jacobi sweep is exact, cheap,
and bit-reproducible. Right singular vectors and singular values fall out
directly; left vectors are never stored (recoverable on demand).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, ModelFormatError
from .sequence import PixelMatrix, _frozen_array, raster_unflatten

PCA_MAGIC = b"PCA1"
_PCA_HEADER = struct.Struct("<4sII")  # magic, N_t, d

DEFAULT_LATENT_DIM = 64
JACOBI_REL_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
EIGENVALUE_CLIP_REL = 1e-12


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Top-d right singular basis of a standardized pixel matrix.

    ``basis`` has shape (N_t, d) with orthonormal columns sorted by
    non-increasing singular value; each column's largest-magnitude entry is
    positive so repeated fits produce identical signs. ``total_variance``
    is the full squared Frobenius mass (sum of all eigenvalues of the Gram
    matrix); it is None for models loaded from disk.
    """

    basis: np.ndarray
    singular_values: np.ndarray
    total_variance: float | None = None

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.float64)
        sv = np.asarray(self.singular_values, dtype=np.float64)
        if basis.ndim != 2 or sv.ndim != 1 or basis.shape[1] != sv.size:
            raise ValueError("basis must be (N_t, d) with d singular values")
        if np.any(sv < 0) or np.any(np.diff(sv) > 0):
            raise ValueError("singular values must be non-negative and non-increasing")
        object.__setattr__(self, "basis", _frozen_array(basis))
        object.__setattr__(self, "singular_values", _frozen_array(sv))

    @property
    def n_t(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def explained_variance_ratio(self) -> np.ndarray:
        """Share of total variance captured by each component (needs total_variance)."""
        if self.total_variance is None:
            raise ValueError("total variance unknown (model loaded from disk)")
        if self.total_variance == 0.0:
            return np.zeros(self.d)
        return self.singular_values**2 / self.total_variance


@dataclass(frozen=True, eq=False)
class ComponentImage:
    """Scores of one principal component arranged as an (N_y, N_x) image."""

    values: np.ndarray
    index: int  # 1-based component number

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))


def _offdiag_norm(a: np.ndarray) -> float:
    # summed from the off-diagonal entries themselves; the algebraic shortcut
    # ||A||^2 - ||diag||^2 cancels catastrophically once the residual is small
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def jacobi_eigh(
    sym: np.ndarray,
    rel_tol: float = JACOBI_REL_TOL,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose a symmetric matrix with cyclic-by-row Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` sorted by non-increasing
    eigenvalue, eigenvectors as columns. Convergence is declared when the
    off-diagonal Frobenius norm drops below ``rel_tol`` times the matrix
    Frobenius norm; exceeding ``max_sweeps`` raises `ConvergenceError`.
    """
    a = np.array(sym, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * max(1.0, float(np.abs(a).max(initial=0.0)))):
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    v = np.eye(n)
    scale = float(np.linalg.norm(a))
    if n == 1 or scale == 0.0:
        order = np.argsort(-np.diag(a), kind="stable")
        return np.diag(a)[order], v[:, order]
    threshold = rel_tol * scale

    converged = False
    for _ in range(max_sweeps):
        if _offdiag_norm(a) <= threshold:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J applied to columns then rows p, q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    if not converged and _offdiag_norm(a) > threshold:
        raise ConvergenceError(
            f"Jacobi eigensolver missed tolerance {rel_tol:g} after {max_sweeps} sweeps"
        )
    eigvals = np.diag(a).copy()
    order = np.argsort(-eigvals, kind="stable")
    return eigvals[order], v[:, order]


def _canonicalize_signs(basis: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-|entry| element is positive (ties: lowest index)."""
    out = basis.copy()
    for k in range(out.shape[1]):
        j = int(np.argmax(np.abs(out[:, k])))
        if out[j, k] < 0.0:
            out[:, k] = -out[:, k]
    return out


def fit_pca(m: PixelMatrix, d: int | None = None) -> PcaModel:
    """Fit the top-d principal components of a standardized pixel matrix.

    Parameters
    ----------
    m : PixelMatrix
        Standardized pixel matrix, shape (P, N_t).
    d : int, optional
        Number of components to keep, 1 <= d <= N_t. Defaults to 64 (the
        latent width used downstream), capped at N_t with a warning when
        the sequence is shorter.

    Returns
    -------
    PcaModel
        Orthonormal right singular basis, non-increasing singular values,
        and the total variance of the input.
    """
    if not m.standardized:
        raise ValueError("fit_pca requires a standardized matrix")
    n_t = m.n_t
    if d is None:
        d = DEFAULT_LATENT_DIM
        if n_t < d:
            warnings.warn(
                f"latent dimension capped at N_t={n_t} (default {DEFAULT_LATENT_DIM} unavailable)",
                stacklevel=2,
            )
            d = n_t
    if not 1 <= d <= n_t:
        raise ValueError(f"d={d} out of range [1, {n_t}]")

    gram = m.data.T @ m.data
    gram = 0.5 * (gram + gram.T)  # BLAS output is not guaranteed bit-symmetric
    eigvals, eigvecs = jacobi_eigh(gram)
    clip = EIGENVALUE_CLIP_REL * max(float(eigvals[0]), 0.0)
    eigvals = np.where(eigvals < clip, 0.0, eigvals)
    singular_values = np.sqrt(eigvals[:d])
    basis = _canonicalize_signs(eigvecs[:, :d])
    return PcaModel(basis=basis, singular_values=singular_values, total_variance=float(np.trace(gram)))


def component_image(m: PixelMatrix, model: PcaModel, k: int) -> ComponentImage:
    """Project the pixel matrix onto component k (1-based) and unflatten to an image."""
    if not 1 <= k <= model.d:
        raise ValueError(f"component index k={k} out of range [1, {model.d}]")
    if m.n_t != model.n_t:
        raise ValueError(f"matrix has N_t={m.n_t} but model expects {model.n_t}")
    scores = m.data @ model.basis[:, k - 1]
    return ComponentImage(values=raster_unflatten(scores, m.image_shape), index=k)


def project_latents(m: PixelMatrix, model: PcaModel) -> np.ndarray:
    """Per-pixel component scores, shape (P, d); column k-1 equals component image k flattened."""
    if not m.standardized:
        raise ValueError("project_latents requires a standardized matrix")
    if m.n_t != model.n_t:
        raise ValueError(f"matrix has N_t={m.n_t} but model expects {model.n_t}")
    # column-by-column so each column is bit-identical to component_image's product
    return np.column_stack([m.data @ model.basis[:, k] for k in range(model.d)])


def left_vectors(m: PixelMatrix, model: PcaModel) -> np.ndarray:
    """Left singular vectors (P, d), computed on demand as S V Gamma^-1.

    Columns for zero singular values are left as zero vectors.
    """
    scores = project_latents(m, model)
    sv = model.singular_values
    safe = np.where(sv > 0.0, sv, 1.0)
    out = scores / safe[None, :]
    out[:, sv == 0.0] = 0.0
    return out


def save_model(path, model: PcaModel) -> None:
    """Persist a model: magic PCA1, u32 N_t, u32 d, f64 singular values, f64 basis column-major."""
    header = _PCA_HEADER.pack(PCA_MAGIC, model.n_t, model.d)
    sv = np.ascontiguousarray(model.singular_values, dtype="<f8").tobytes()
    basis = np.asfortranarray(model.basis.astype("<f8")).tobytes(order="F")
    Path(path).write_bytes(header + sv + basis)


def load_model(path) -> PcaModel:
    """Read a model written by `save_model`."""
    raw = Path(path).read_bytes()
    if len(raw) < _PCA_HEADER.size:
        raise ModelFormatError(f"{path}: incomplete PCA header")
    magic, n_t, d = _PCA_HEADER.unpack_from(raw)
    if magic != PCA_MAGIC:
        raise ModelFormatError(f"{path}: not a PCA model file (bad magic {magic!r})")
    expected = _PCA_HEADER.size + 8 * d + 8 * n_t * d
    if len(raw) != expected:
        raise ModelFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = raw[_PCA_HEADER.size:]
    sv = np.frombuffer(body, dtype="<f8", count=d)
    basis = np.frombuffer(body, dtype="<f8", offset=8 * d, count=n_t * d).reshape((n_t, d), order="F")
    return PcaModel(basis=basis, singular_values=sv, total_variance=None)
