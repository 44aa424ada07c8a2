"""Graph connection Laplacian, symmetric eigensolvers and the EIG baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import _blocks
from .measurements import MeasurementGraph
from .so_group import project_to_rotation

logger = logging.getLogger(__name__)

__all__ = [
    "ConnectionLaplacian",
    "EigensolverError",
    "build_connection_laplacian",
    "negative_part",
    "smallest_eigenvectors",
    "solve_eig",
]

DENSE_LIMIT = 2000


class EigensolverError(RuntimeError):
    """Iterative eigensolver failed to reach the residual target."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True, eq=False)
class ConnectionLaplacian:
    n: int
    d: int
    L1: np.ndarray
    degrees: np.ndarray

    def normalized(self) -> np.ndarray:
        """``I - D^{-1/2} W D^{-1/2}``; isolated vertices keep a zero row."""
        deg = np.repeat(self.degrees.astype(float), self.d)
        with np.errstate(divide="ignore"):
            s = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
        return s[:, None] * self.L1 * s[None, :]


def build_connection_laplacian(g: MeasurementGraph) -> ConnectionLaplacian:
    """Assemble ``L1 = D1 - W1`` with unit edge weights."""
    if g.n_edges == 0:
        raise ValueError("graph has no edges")
    deg = g.degrees()
    diag = deg[:, None, None] * np.eye(g.d)
    L1 = _blocks.assemble(g.n, g.d, g.rows, g.cols, -g.blocks, diag=diag)
    return ConnectionLaplacian(g.n, g.d, L1, deg)


def _residuals(L, w, V):
    return np.linalg.norm(L @ V - V * w, axis=0)


def smallest_eigenvectors(L, k: int, *, rtol: float = 1e-8, dense_limit: int = DENSE_LIMIT):
    """The ``k`` algebraically smallest eigenpairs of a symmetric matrix.

    Dense LAPACK up to ``dense_limit`` rows, Lanczos (ARPACK) above.
    Returns ``(w, V)`` with ``w`` ascending and orthonormal columns in ``V``.
    Raises :class:`EigensolverError` when the per-pair residual
    ``||L v - w v||`` exceeds ``rtol * ||L||_2``.
    """
    L = np.asarray(L, dtype=float)
    N = L.shape[0]
    if L.shape != (N, N):
        raise ValueError("matrix must be square")
    if not 1 <= k <= N:
        raise ValueError("k must satisfy 1 <= k <= N")
    if np.linalg.norm(L - L.T) > 1e-10 * max(1.0, np.linalg.norm(L)):
        raise ValueError("matrix is not symmetric")
    if N <= dense_limit:
        w, V = scipy.linalg.eigh(L, subset_by_index=[0, k - 1], driver="evr")
        return w, V
    try:
        w, V = eigsh(L, k=k, which="SA", tol=1e-12)
    except ArpackNoConvergence as exc:
        w, V = exc.eigenvalues, exc.eigenvectors
        res = _residuals(L, w, V).max() if len(w) else np.inf
        raise EigensolverError(f"Lanczos did not converge (residual {res:.3g})", res) from exc
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    scale = abs(eigsh(L, k=1, which="LM", return_eigenvectors=False)[0])
    res = _residuals(L, w, V).max()
    if res > rtol * max(scale, 1.0):
        raise EigensolverError(f"eigenpair residual {res:.3g} above target", res)
    return w, V


def negative_part(H, *, threshold: float = 1e-12, rank_hint: int | None = None,
                  dense_limit: int = DENSE_LIMIT):
    """Eigenpairs of symmetric ``H`` with eigenvalue below ``-threshold``.

    Dense path computes exactly that subset. Above ``dense_limit`` a Lanczos
    solve for ``rank_hint`` pairs is repeated with a doubled count until the
    largest returned eigenvalue clears the threshold.
    """
    N = H.shape[0]
    if N <= dense_limit:
        return scipy.linalg.eigh(H, subset_by_value=(-np.inf, -threshold), driver="evr")
    k = max(1, rank_hint or 1)
    while True:
        k = min(k, N - 1)
        w, V = smallest_eigenvectors(H, k, dense_limit=dense_limit)
        if w[-1] >= -threshold or k >= N - 1:
            keep = w < -threshold
            return w[keep], V[:, keep]
        k *= 2


def solve_eig(g: MeasurementGraph, *, normalized: bool = False, return_info: bool = False):
    """Spectral synchronization from the d smallest eigenvectors of L1.

    Returns an ``(n, d, d)`` array of rotation estimates (up to a global
    rotation). With ``return_info`` also returns a dict holding the
    eigenvalues and the indices of vertices whose block was rank deficient.
    """
    if g.n_edges == 0 or not g.is_connected():
        raise ValueError("EIG needs a connected measurement graph")
    lap = build_connection_laplacian(g)
    L = lap.normalized() if normalized else lap.L1
    w, V = smallest_eigenvectors(L, g.d)
    if normalized:
        V = V / np.sqrt(np.repeat(lap.degrees, g.d))[:, None]
    T = _blocks.orient(_blocks.split_rows(V, g.n, g.d))
    sv = np.linalg.svd(T, compute_uv=False)
    deficient = np.flatnonzero(sv[:, -1] <= 1e-10 * sv[:, 0])
    if deficient.size:
        logger.warning("EIG: %d rank-deficient eigenvector blocks", deficient.size)
    # T_i ~ R_i^T O, so proj(T_i^T) estimates R_i up to the global O^T
    est = project_to_rotation(np.swapaxes(T, 1, 2))
    if return_info:
        return est, {"eigenvalues": w, "rank_deficient": deficient}
    return est
