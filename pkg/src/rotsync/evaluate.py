"""Rounding Gram matrices to rotations and scoring estimates."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _blocks
from .so_group import as_rng, project_to_rotation

logger = logging.getLogger(__name__)

__all__ = [
    "EvalResult",
    "RotationEstimate",
    "mse",
    "relative_error",
    "round_deterministic",
    "round_random",
]


@dataclass(frozen=True, eq=False)
class RotationEstimate:
    rotations: np.ndarray
    source: str = "lud"
    rounding: str = "deterministic"
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class EvalResult:
    mse: float
    registration: np.ndarray
    re: float | None = None


def _blocks_to_rotations(T):
    """Project each block; returns ``(rotations, any_zero_block)``."""
    # T_i ~ R_i^T O for every vertex; proj(T_i^T) = O^T R_i
    T = np.swapaxes(T, 1, 2)
    zero = ~np.any(T, axis=(1, 2))
    if zero.any():
        # an all-zero block carries no information; fall back to the identity
        T = T.copy()
        T[zero] = np.eye(T.shape[-1])
    return project_to_rotation(T), bool(zero.any())


def _check_gram(G, d):
    G = np.asarray(G, dtype=float)
    N = G.shape[0]
    if G.shape != (N, N) or N % d:
        raise ValueError(f"Gram matrix of shape {G.shape} is incompatible with d={d}")
    return G, N // d


def round_deterministic(G, d: int, *, source: str = "lud") -> RotationEstimate:
    """Rotations from the top-d eigenvectors of ``G``, projected block-wise."""
    G, n = _check_gram(G, d)
    N = n * d
    lo = max(N - d - 1, 0)
    w, V = scipy.linalg.eigh(G, subset_by_index=[lo, N - 1], driver="evr")
    top = V[:, -d:]
    degenerate = False
    if N > d:
        gap = w[-d] - w[-d - 1]
        degenerate = bool(gap < 1e-8 * max(abs(w[-1]), 1.0))
        if degenerate:
            logger.debug("rounding: d-th eigenvalue gap %.3g is tiny", gap)
    T = _blocks.orient(_blocks.split_rows(top, n, d))
    rotations, zero = _blocks_to_rotations(T)
    return RotationEstimate(rotations, source, "deterministic", degenerate or zero)


def round_random(G, d: int, rng=None, *, source: str = "lud") -> RotationEstimate:
    """Randomized rounding: a square-root factor of ``G`` times a random orthonormal frame.

    Cholesky is used when ``G`` is numerically positive definite, otherwise
    the eigenvalue-clipped symmetric square root.
    """
    G, n = _check_gram(G, d)
    G = 0.5 * (G + G.T)
    N = n * d
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        # singular or slightly indefinite: any factor with G = L L^T serves,
        # and the clipped symmetric square root is exact on the PSD part
        w, V = scipy.linalg.eigh(G, driver="evr")
        if w[0] < -1e-6 * max(w[-1], 1.0):
            raise np.linalg.LinAlgError(f"Gram matrix is not PSD (min eigenvalue {w[0]:.3g})")
        L = V * np.sqrt(np.clip(w, 0.0, None))
    rng = as_rng(rng)
    Q, Rq = np.linalg.qr(rng.standard_normal((N, d)))
    Q = Q * np.sign(np.diag(Rq))
    T = _blocks.orient(_blocks.split_rows(L @ Q, n, d))
    rotations, zero = _blocks_to_rotations(T)
    return RotationEstimate(rotations, source, "random", zero)


def mse(est, truth) -> EvalResult:
    """Mean squared error after the best global rotation.

    ``O = argmin sum ||R_i - O Rhat_i||^2`` over SO(d), from the SVD of
    ``sum R_i Rhat_i^T``.
    """
    est = np.asarray(getattr(est, "rotations", est), dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape or est.ndim != 3 or est.shape[0] < 1:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    n = est.shape[0]
    M = np.einsum("iab,icb->ac", truth, est) / n
    O = project_to_rotation(M)
    err = truth - O @ est
    return EvalResult(float(np.sum(err * err) / n), O)


def relative_error(G_hat, G) -> float:
    """``||G_hat - G||_F / ||G||_F``."""
    G_hat = np.asarray(G_hat, dtype=float)
    G = np.asarray(G, dtype=float)
    if G_hat.shape != G.shape:
        raise ValueError("shape mismatch")
    den = np.linalg.norm(G)
    if den == 0:
        raise ZeroDivisionError("reference Gram matrix is zero")
    return float(np.linalg.norm(G_hat - G) / den)
