"""Numerical rank via singular values with one documented threshold rule."""

from __future__ import annotations

import os

import numpy as np

DEFAULT_TOL_RANK = 1e-10


def env_tol_rank() -> float:
    """Default rank tolerance, overridable through RATEX_TOL_RANK."""
    raw = os.environ.get("RATEX_TOL_RANK")
    return float(raw) if raw else DEFAULT_TOL_RANK


def numerical_rank(mat: np.ndarray, tol_rank: float = DEFAULT_TOL_RANK):
    """Rank = number of singular values above tol_rank * sigma_max * max(shape).

    Returns ``(rank, singular_values, cutoff)``.
    """
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return 0, np.array([]), 0.0
    svals = np.linalg.svd(mat, compute_uv=False)
    cutoff = tol_rank * svals[0] * max(mat.shape)
    return int(np.sum(svals > cutoff)), svals, float(cutoff)
