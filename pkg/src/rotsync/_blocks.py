"""Helpers for nd x nd matrices viewed as n x n grids of d x d blocks."""

import numpy as np


def assemble(n, d, rows, cols, blocks, diag=None):
    """Symmetric matrix with ``blocks`` at (i, j), their transposes at (j, i)."""
    M = np.zeros((n, d, n, d))
    if len(rows):
        M[rows, :, cols, :] = blocks
        M[cols, :, rows, :] = np.swapaxes(blocks, 1, 2)
    if diag is not None:
        idx = np.arange(n)
        M[idx, :, idx, :] = diag
    return M.reshape(n * d, n * d)


def extract(M, n, d, rows, cols):
    """The (i, j) blocks of ``M`` for each edge, shape (m, d, d)."""
    return M.reshape(n, d, n, d)[rows, :, cols, :]


def diagonal_blocks(M, n, d):
    idx = np.arange(n)
    return M.reshape(n, d, n, d)[idx, :, idx, :]


def split_rows(V, n, d):
    """View an (nd, k) matrix as n stacked (d, k) blocks."""
    return V.reshape(n, d, V.shape[1])


def orient(T):
    """Flip the last column of an (n, d, d) eigenvector stack when most blocks
    have negative determinant; an eigenbasis is only defined up to O(d)."""
    if np.sum(np.linalg.det(T)) < 0:
        T = T.copy()
        T[..., -1] *= -1.0
    return T
