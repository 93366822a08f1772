"""Gram-Jacobi PCA tests against dense-eigendecomposition and reconstruction oracles."""

import warnings

import numpy as np
import pytest

from thermolatent import (
    PixelMatrix,
    component_image,
    fit_pca,
    jacobi_eigh,
    left_vectors,
    load_model,
    project_latents,
    save_model,
    standardize,
)
from thermolatent.errors import ModelFormatError
from thermolatent.pca import _canonicalize_signs


def as_standardized(data, image_shape):
    """Wrap a raw matrix and mark it standardized, bypassing the statistics.

    Lets the algebra tests use small hand matrices whose rows are not
    actually standardized; fit_pca only needs the flag.
    """
    return PixelMatrix(data, image_shape=image_shape, standardized=True)


def eigh_oracle(data, d):
    """Brute-force PCA reference: numpy's dense symmetric eigendecomposition."""
    gram = data.T @ data
    gram = 0.5 * (gram + gram.T)
    w, v = np.linalg.eigh(gram)
    order = np.argsort(-w, kind="stable")
    w = np.clip(w[order], 0.0, None)
    return np.sqrt(w[:d]), _canonicalize_signs(v[:, order][:, :d])


# ---------------------------------------------------------------- jacobi


def test_jacobi_identity():
    vals, vecs = jacobi_eigh(np.eye(3))
    assert np.allclose(vals, 1.0)
    assert np.allclose(vecs @ vecs.T, np.eye(3))


def test_jacobi_hand_2x2():
    # [[2, 1], [1, 2]] has eigenvalues 3 and 1
    vals, vecs = jacobi_eigh(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(vals, [3.0, 1.0])
    assert np.allclose(np.abs(vecs[:, 0]), 1 / np.sqrt(2))


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        jacobi_eigh(np.zeros((2, 3)))


def test_jacobi_matches_numpy_on_random_symmetric():
    rng = np.random.default_rng(0)
    for n in (2, 3, 5, 8):
        a = rng.normal(size=(n, n))
        sym = a + a.T
        vals, vecs = jacobi_eigh(sym)
        ref = np.sort(np.linalg.eigvalsh(sym))[::-1]
        assert np.abs(vals - ref).max() < 1e-10 * max(1.0, np.abs(ref).max())
        assert np.abs(vecs @ vecs.T - np.eye(n)).max() < 1e-12
        assert np.abs(sym @ vecs - vecs @ np.diag(vals)).max() < 1e-9


# ---------------------------------------------------------------- fit_pca


def test_fit_pca_diagonal_case():
    # 2 pixels, 2 frames: S = [[2, 0], [0, 1]]
    m = as_standardized(np.array([[2.0, 0.0], [0.0, 1.0]]), (1, 2))
    model = fit_pca(m, 2)
    assert np.allclose(model.singular_values, [2.0, 1.0])
    assert np.allclose(np.abs(model.basis), np.eye(2), atol=1e-12)
    assert model.basis[0, 0] > 0 and model.basis[1, 1] > 0


def test_fit_pca_rank_one_case():
    # S = [[1, 1], [1, 1]]: gram = [[2, 2], [2, 2]], eigenvalues 4 and 0
    m = as_standardized(np.ones((2, 2)), (1, 2))
    model = fit_pca(m, 2)
    assert np.allclose(model.singular_values, [2.0, 0.0], atol=1e-12)
    assert np.allclose(model.basis[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)])


def test_fit_pca_full_reconstruction():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(6, 4))
    m = as_standardized(data, (2, 3))
    model = fit_pca(m, 4)
    scores = project_latents(m, model)  # P_k columns = S v_k
    rebuilt = scores @ model.basis.T  # sum_k (S v_k) v_k^T
    rel = np.linalg.norm(rebuilt - data) / np.linalg.norm(data)
    assert rel < 1e-8


def test_fit_pca_matches_eigh_oracle_many_random():
    rng = np.random.default_rng(2)
    for trial in range(50):
        p = int(rng.integers(2, 9))
        n_t = int(rng.integers(2, 7))
        data = rng.normal(size=(p, n_t))
        m = as_standardized(data, (1, p))
        d = min(p, n_t)
        model = fit_pca(m, d)
        sv_ref, basis_ref = eigh_oracle(data, d)
        assert np.abs(model.singular_values - sv_ref).max() <= 1e-8 * max(1.0, sv_ref.max())
        # compare only well-separated, nonzero components; degenerate
        # eigenvectors are defined up to rotation
        ev = sv_ref**2
        for k in range(d):
            gap = min(
                [abs(ev[k] - ev[j]) for j in range(d) if j != k],
                default=np.inf,
            )
            if sv_ref[k] > 1e-6 and gap > 1e-6 * max(1.0, ev.max()):
                assert np.abs(model.basis[:, k] - basis_ref[:, k]).max() < 1e-6


def test_fit_pca_orthonormal_and_sorted():
    rng = np.random.default_rng(3)
    m = as_standardized(rng.normal(size=(20, 6)), (4, 5))
    model = fit_pca(m, 6)
    g = model.basis.T @ model.basis
    assert np.abs(g - np.eye(6)).max() < 1e-8
    assert np.all(np.diff(model.singular_values) <= 0)
    for k in range(6):
        j = np.argmax(np.abs(model.basis[:, k]))
        assert model.basis[j, k] > 0


def test_fit_pca_variance_maximality():
    rng = np.random.default_rng(4)
    data = rng.normal(size=(15, 5))
    m = as_standardized(data, (3, 5))
    model = fit_pca(m, 1)
    best = np.linalg.norm(data @ model.basis[:, 0]) ** 2
    for _ in range(1000):
        w = rng.normal(size=5)
        w /= np.linalg.norm(w)
        assert np.linalg.norm(data @ w) ** 2 <= best + 1e-9


def test_fit_pca_deterministic():
    rng = np.random.default_rng(5)
    data = rng.normal(size=(10, 4))
    a = fit_pca(as_standardized(data, (2, 5)), 4)
    b = fit_pca(as_standardized(data, (2, 5)), 4)
    assert np.array_equal(a.basis, b.basis)
    assert np.array_equal(a.singular_values, b.singular_values)


def test_fit_pca_requires_standardized_and_valid_d():
    rng = np.random.default_rng(6)
    raw = PixelMatrix(rng.normal(size=(4, 3)), image_shape=(2, 2))
    with pytest.raises(ValueError):
        fit_pca(raw, 2)
    m = as_standardized(rng.normal(size=(4, 3)), (2, 2))
    with pytest.raises(ValueError):
        fit_pca(m, 0)
    with pytest.raises(ValueError):
        fit_pca(m, 4)


def test_fit_pca_default_d_caps_with_warning():
    rng = np.random.default_rng(7)
    m = as_standardized(rng.normal(size=(10, 5)), (2, 5))
    with pytest.warns(UserWarning, match="capped"):
        model = fit_pca(m)
    assert model.d == 5


def test_explained_variance_ratio():
    rng = np.random.default_rng(8)
    data = rng.normal(size=(12, 4))
    m = as_standardized(data, (3, 4))
    model = fit_pca(m, 4)
    ratios = model.explained_variance_ratio()
    assert ratios.sum() == pytest.approx(1.0, rel=1e-10)
    gram_eigs = np.sort(np.linalg.eigvalsh(data.T @ data))[::-1]
    assert np.allclose(ratios, gram_eigs / gram_eigs.sum(), atol=1e-10)


# ---------------------------------------------------------------- projections


def test_component_image_diagonal_case():
    m = as_standardized(np.array([[2.0, 0.0], [0.0, 1.0]]), (1, 2))
    model = fit_pca(m, 2)
    img = component_image(m, model, 1)
    assert img.values.tolist() == [[2.0, 0.0]]
    assert img.index == 1


def test_component_image_norm_equals_singular_value():
    rng = np.random.default_rng(9)
    data = rng.normal(size=(18, 6)) * 2.5
    m = as_standardized(data, (3, 6))
    model = fit_pca(m, 6)
    for k in range(1, 7):
        img = component_image(m, model, k)
        assert np.linalg.norm(img.values) == pytest.approx(model.singular_values[k - 1], abs=1e-8)


def test_component_image_k_out_of_range():
    m = as_standardized(np.eye(2), (1, 2))
    model = fit_pca(m, 2)
    for k in (0, 3):
        with pytest.raises(ValueError):
            component_image(m, model, k)


def test_project_latents_matches_component_images_exactly():
    rng = np.random.default_rng(10)
    data = rng.normal(size=(20, 5))
    m = as_standardized(data, (4, 5))
    model = fit_pca(m, 5)
    scores = project_latents(m, model)
    for k in range(1, 6):
        img = component_image(m, model, k)
        assert np.array_equal(scores[:, k - 1], img.values.ravel())


def test_project_latents_diagonal_row():
    m = as_standardized(np.array([[2.0, 0.0], [0.0, 1.0]]), (1, 2))
    model = fit_pca(m, 2)
    scores = project_latents(m, model)
    assert scores[0].tolist() == [2.0, 0.0]


def test_project_latents_bessel_inequality():
    rng = np.random.default_rng(11)
    data = rng.normal(size=(14, 6))
    m = as_standardized(data, (2, 7))
    for d in (2, 4, 6):
        model = fit_pca(m, d)
        scores = project_latents(m, model)
        lhs = np.sum(scores**2, axis=1)
        rhs = np.sum(data**2, axis=1)
        assert np.all(lhs <= rhs + 1e-9)
        if d == 6:
            assert np.allclose(lhs, rhs, atol=1e-8)


def test_project_latents_requires_standardized_matching():
    rng = np.random.default_rng(12)
    data = rng.normal(size=(6, 4))
    m = as_standardized(data, (2, 3))
    model = fit_pca(m, 3)
    raw = PixelMatrix(data, image_shape=(2, 3))
    with pytest.raises(ValueError):
        project_latents(raw, model)
    other = as_standardized(rng.normal(size=(6, 5)), (2, 3))
    with pytest.raises(ValueError):
        project_latents(other, model)


def test_first_component_separates_synthetic_defects():
    # derived oracle: run the generator, score the first component image
    from thermolatent import DefectSpec, SpecimenSpec, contrast, generate, reshape_raster, standardize

    spec = SpecimenSpec(
        defects=(DefectSpec("rect", (16, 16), 5, 0.5),),
        image_shape=(24, 24),
        n_frames=40,
        noise_std=0.01,
        corner_gains=(1.0, 0.95, 0.95, 0.9),
        seed=7,
    )
    seq, truth = generate(spec)
    m, _ = standardize(reshape_raster(seq))
    model = fit_pca(m, 8)
    img = component_image(m, model, 1)
    assert contrast(img.values, truth.defect_masks[0], truth.sound_mask) > 0.05


def test_left_vectors_orthonormal_for_full_rank():
    rng = np.random.default_rng(13)
    data = rng.normal(size=(30, 4))
    m = as_standardized(data, (5, 6))
    model = fit_pca(m, 4)
    u = left_vectors(m, model)
    assert np.abs(u.T @ u - np.eye(4)).max() < 1e-8


# ---------------------------------------------------------------- persistence


def test_model_roundtrip(tmp_path):
    rng = np.random.default_rng(14)
    m = as_standardized(rng.normal(size=(10, 5)), (2, 5))
    model = fit_pca(m, 3)
    path = tmp_path / "model.pca1"
    save_model(path, model)
    back = load_model(path)
    assert np.array_equal(back.basis, model.basis)
    assert np.array_equal(back.singular_values, model.singular_values)
    assert back.total_variance is None


def test_model_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.pca1"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(ModelFormatError):
        load_model(path)
    path.write_bytes(b"PCA1" + np.array([3, 2], dtype="<u4").tobytes() + b"\x00" * 7)
    with pytest.raises(ModelFormatError):
        load_model(path)
