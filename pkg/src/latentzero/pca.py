"""Principal components by power iteration with deflation.

The basis is fit on the true observations only; decoded variants are
projected into that same basis. Start vectors are fixed by an internal
seed so repeated runs produce identical components.
"""

from __future__ import annotations

import numpy as np

from .errors import AnalysisError


class PCABasis:
    def __init__(self, mean, components, explained_variance):
        self.mean = mean                          # (D,)
        self.components = components              # (D, n)
        self.explained_variance = explained_variance  # (n,)

    def project(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        return (x - self.mean) @ self.components


def _power_iteration(a, start, prev_components, max_iter=2000, tol=1e-13):
    v = start / np.linalg.norm(start)
    for _ in range(max_iter):
        w = a @ v
        # re-orthogonalize against earlier components every step so the
        # basis Gram matrix stays at identity
        for u in prev_components:
            w -= (w @ u) * u
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            raise AnalysisError("power iteration collapsed (degenerate input)")
        w /= norm
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    return v


def fit_pca(samples, n_components=2):
    """Fit components on flattened samples (N, ...) -> PCABasis.

    Raises AnalysisError for degenerate (zero-variance) input.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
    if x.shape[0] < 2:
        raise AnalysisError("need at least 2 samples for PCA")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (x.shape[0] - 1)
    total_var = np.trace(cov)
    if total_var < 1e-12:
        raise AnalysisError("zero-variance input: PCA basis is degenerate")

    rng = np.random.default_rng(0x9C4)
    comps, eigvals = [], []
    for _ in range(n_components):
        start = rng.standard_normal(x.shape[1])
        v = _power_iteration(cov, start, comps)
        comps.append(v)
        eigvals.append(float(v @ cov @ v))
    components = np.stack(comps, axis=1)
    return PCABasis(mean, components, np.array(eigvals))


def pca_project(observations, variants=None, n_components=2):
    """Fit on `observations`; project it plus each named variant.

    variants: dict name -> array of samples (same flattened dim).
    Returns (basis, dict name -> (N, n_components) coords) where the
    true observations appear under the name "true".
    """
    basis = fit_pca(observations, n_components)
    out = {"true": basis.project(np.asarray(observations).reshape(len(observations), -1))}
    for name, data in (variants or {}).items():
        out[name] = basis.project(np.asarray(data).reshape(len(data), -1))
    return basis, out
