import numpy as np
import pytest

from latentzero.errors import AnalysisError
from latentzero.pca import fit_pca, pca_project

from .oracles import jacobi_eigh


def test_rank2_data_reconstructs_exactly():
    rng = np.random.default_rng(0)
    basis2 = np.linalg.qr(rng.standard_normal((8, 2)))[0]
    coords = rng.standard_normal((40, 2))
    x = coords @ basis2.T + 3.0
    basis = fit_pca(x, n_components=2)
    proj = basis.project(x)
    recon = proj @ basis.components.T + basis.mean
    assert np.max(np.abs(recon - x)) < 1e-6


def test_duplicated_dataset_same_projection_up_to_sign():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((30, 5))
    b1 = fit_pca(x, 2)
    b2 = fit_pca(np.concatenate([x, x]), 2)
    for j in range(2):
        dot = abs(b1.components[:, j] @ b2.components[:, j])
        assert dot > 1 - 1e-8


def test_top2_eigenpairs_match_jacobi_oracle():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((10, 6))
    basis = fit_pca(x, 2)
    xc = x - x.mean(axis=0)
    cov = (xc.T @ xc) / (x.shape[0] - 1)
    evals, evecs = jacobi_eigh(cov)
    for j in range(2):
        assert abs(basis.explained_variance[j] - evals[j]) < 1e-8
        assert abs(abs(basis.components[:, j] @ evecs[:, j]) - 1.0) < 1e-8


def test_components_orthonormal_to_1e8():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((50, 12))
    basis = fit_pca(x, 4)
    gram = basis.components.T @ basis.components
    assert np.max(np.abs(gram - np.eye(4))) < 1e-8


def test_explained_variance_non_increasing():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((60, 9)) * np.linspace(3, 0.5, 9)
    basis = fit_pca(x, 4)
    ev = basis.explained_variance
    assert all(a >= b - 1e-12 for a, b in zip(ev, ev[1:]))


def test_zero_variance_input_degenerate():
    x = np.ones((10, 4))
    with pytest.raises(AnalysisError):
        fit_pca(x, 2)


def test_variants_projected_into_same_basis():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((20, 6))
    noisy = x + 0.01 * rng.standard_normal((20, 6))
    basis, coords = pca_project(x, {"noisy": noisy})
    assert coords["true"].shape == (20, 2)
    assert coords["noisy"].shape == (20, 2)
    assert np.max(np.abs(coords["true"] - coords["noisy"])) < 0.1


def test_fit_deterministic():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((25, 7))
    b1 = fit_pca(x, 3)
    b2 = fit_pca(x, 3)
    assert np.array_equal(b1.components, b2.components)
