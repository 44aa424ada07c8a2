"""Noisy pairwise-ratio measurement graphs.

Edges are stored once per unordered pair ``i < j`` with block
``R_ij ~ R_i^T R_j``; the reverse direction is the transpose.
"""

from __future__ import annotations

import dataclasses
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .so_group import as_rng, sample_haar, sample_vmf

__all__ = [
    "ConnectivityWarning",
    "MeasurementGraph",
    "canonicalize_to_identity",
    "restore_frame",
    "generate",
    "load_graph",
    "save_graph",
]


class ConnectivityWarning(UserWarning):
    """Edge probability below the 2 log(n) / n connectivity threshold."""


@dataclass(frozen=True, eq=False)
class MeasurementGraph:
    """Measured rotation ratios on an undirected graph.

    Attributes
    ----------
    n, d : int
        Number of vertices and rotation dimension.
    rows, cols : ndarray of int, shape (m,)
        Edge endpoints, ``rows < cols``, each unordered pair at most once.
    blocks : ndarray, shape (m, d, d)
        Measured ratio ``R_ij`` for each edge.
    truth : ndarray, shape (n, d, d), optional
        Ground-truth rotations.
    good_mask : ndarray of bool, shape (m,), optional
        Which edges were drawn from the inlier model.
    """

    n: int
    d: int
    rows: np.ndarray
    cols: np.ndarray
    blocks: np.ndarray
    truth: np.ndarray | None = None
    good_mask: np.ndarray | None = None
    p: float = 1.0
    p1: float = 1.0
    kappa: float | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.int64)
        cols = np.array(self.cols, dtype=np.int64)
        blocks = np.array(self.blocks, dtype=float)
        if blocks.shape != (rows.size, self.d, self.d) or cols.shape != rows.shape:
            raise ValueError("edge arrays have inconsistent shapes")
        if rows.size and (np.any(rows >= cols) or rows.min() < 0 or cols.max() >= self.n):
            raise ValueError("edges must satisfy 0 <= i < j < n")
        if np.unique(rows * self.n + cols).size != rows.size:
            raise ValueError("duplicate edge")
        for arr in (rows, cols, blocks):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "blocks", blocks)
        if self.truth is not None:
            truth = np.array(self.truth, dtype=float)
            if truth.shape != (self.n, self.d, self.d):
                raise ValueError("truth must have shape (n, d, d)")
            truth.setflags(write=False)
            object.__setattr__(self, "truth", truth)
        if self.good_mask is not None:
            mask = np.array(self.good_mask, dtype=bool)
            if mask.shape != rows.shape:
                raise ValueError("good_mask must have one entry per edge")
            mask.setflags(write=False)
            object.__setattr__(self, "good_mask", mask)

    @property
    def n_edges(self) -> int:
        return int(self.rows.size)

    def edges(self):
        """Iterate over ``(i, j, R_ij)`` with ``i < j``."""
        for i, j, B in zip(self.rows, self.cols, self.blocks):
            yield int(i), int(j), B

    def ratio(self, i: int, j: int) -> np.ndarray:
        """Measured ``R_ij`` for either orientation of a stored edge."""
        a, b = (i, j) if i < j else (j, i)
        hit = np.flatnonzero((self.rows == a) & (self.cols == b))
        if hit.size == 0:
            raise KeyError((i, j))
        B = self.blocks[hit[0]]
        return B if i < j else B.T

    def degrees(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.n) + np.bincount(self.cols, minlength=self.n)

    def is_connected(self) -> bool:
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        adj = coo_matrix((np.ones(self.n_edges), (self.rows, self.cols)), shape=(self.n, self.n))
        return connected_components(adj, directed=False)[0] == 1

    def true_gram(self) -> np.ndarray:
        """``G_ij = R_i^T R_j`` from the stored truth."""
        if self.truth is None:
            raise ValueError("graph has no ground truth")
        Rmat = np.concatenate(list(self.truth), axis=1)  # d x nd
        return Rmat.T @ Rmat

    def replace(self, **changes) -> MeasurementGraph:
        return dataclasses.replace(self, **changes)


def generate(
    n: int,
    d: int,
    p1: float = 1.0,
    p: float = 1.0,
    kappa: float | None = None,
    rng=None,
    *,
    seed: int | None = None,
) -> MeasurementGraph:
    """Draw a random synchronization instance.

    Ground-truth rotations are Haar. Each pair is observed with probability
    ``p1``; each observed edge is good with probability ``p``. Good edges carry
    ``R_i^T R_j`` exactly, or a von Mises-Fisher draw around it when ``kappa``
    is given; bad edges are independent Haar rotations.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0.0 < p1 <= 1.0:
        raise ValueError("p1 must lie in (0, 1]")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if kappa is not None and not kappa > 0:
        raise ValueError("kappa must be positive")
    if p1 < 2.0 * math.log(n) / n:
        warnings.warn(
            f"p1={p1} is below the connectivity threshold 2 log(n)/n = {2 * math.log(n) / n:.4f}",
            ConnectivityWarning,
            stacklevel=2,
        )
    if rng is None and seed is not None:
        rng = seed
    rng = as_rng(rng)

    truth = sample_haar(d, rng, size=n)
    rows, cols = np.triu_indices(n, k=1)
    if p1 < 1.0:
        keep = rng.uniform(size=rows.size) < p1
        rows, cols = rows[keep], cols[keep]
    m = rows.size
    good = rng.uniform(size=m) < p

    clean = np.swapaxes(truth[rows], 1, 2) @ truth[cols]
    blocks = sample_haar(d, rng, size=m) if m else np.empty((0, d, d))
    n_good = int(good.sum())
    if kappa is None:
        blocks[good] = clean[good]
    elif n_good:
        blocks[good] = sample_vmf(np.eye(d), kappa, rng, size=n_good)
        blocks[good] = clean[good] @ blocks[good]
    return MeasurementGraph(
        n=n, d=d, rows=rows, cols=cols, blocks=blocks, truth=truth, good_mask=good,
        p=p, p1=p1, kappa=kappa, seed=seed,
    )


def canonicalize_to_identity(g: MeasurementGraph) -> MeasurementGraph:
    """Conjugate every block to ``R_i R_ij R_j^T`` so that the truth becomes identity."""
    if g.truth is None:
        raise ValueError("canonicalization needs the ground truth")
    T = g.truth
    blocks = T[g.rows] @ g.blocks @ np.swapaxes(T[g.cols], 1, 2)
    ident = np.broadcast_to(np.eye(g.d), T.shape).copy()
    return g.replace(blocks=blocks, truth=ident, meta={**g.meta, "frame": T})


def restore_frame(g: MeasurementGraph, frame: np.ndarray) -> MeasurementGraph:
    """Inverse of :func:`canonicalize_to_identity` for the given truth frame."""
    blocks = np.swapaxes(frame[g.rows], 1, 2) @ g.blocks @ frame[g.cols]
    return g.replace(blocks=blocks, truth=frame)


def _fmt(x) -> str:
    return repr(float(x)) if np.isfinite(x) else str(float(x))


def save_graph(g: MeasurementGraph, path) -> None:
    """Write the plain-text edge-list format.

    Header ``n d p1 p kappa seed`` (``kappa``/``seed`` as ``none`` when
    absent), one ``i j`` line per edge followed by the d*d row-major entries,
    then an optional ``#truth`` section with one row-major rotation per line
    and an optional ``#good`` line of 0/1 flags.
    """
    buf = io.StringIO()
    kappa = "none" if g.kappa is None else _fmt(g.kappa)
    seed = "none" if g.seed is None else str(int(g.seed))
    buf.write(f"{g.n} {g.d} {_fmt(g.p1)} {_fmt(g.p)} {kappa} {seed}\n")
    for i, j, B in g.edges():
        buf.write(f"{i} {j} " + " ".join(f"{v:.17g}" for v in B.ravel()) + "\n")
    if g.truth is not None:
        buf.write("#truth\n")
        for R in g.truth:
            buf.write(" ".join(f"{v:.17g}" for v in R.ravel()) + "\n")
    if g.good_mask is not None:
        buf.write("#good\n")
        buf.write(" ".join("1" if b else "0" for b in g.good_mask) + "\n")
    Path(path).write_text(buf.getvalue())


def load_graph(path) -> MeasurementGraph:
    """Read a graph written by :func:`save_graph`."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError("empty graph file")
    head = lines[0].split()
    if len(head) != 6:
        raise ValueError("header must be 'n d p1 p kappa seed'")
    n, d = int(head[0]), int(head[1])
    p1, p = float(head[2]), float(head[3])
    kappa = None if head[4] == "none" else float(head[4])
    seed = None if head[5] == "none" else int(head[5])

    rows, cols, blocks, truth, good = [], [], [], [], None
    section = "edges"
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("#"):
            section = line[1:].strip()
            continue
        parts = line.split()
        if section == "edges":
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            blocks.append([float(v) for v in parts[2:]])
        elif section == "truth":
            truth.append([float(v) for v in parts])
        elif section == "good":
            good = [v == "1" for v in parts]
        else:
            raise ValueError(f"unknown section #{section}")
    blocks_arr = np.asarray(blocks, dtype=float).reshape(len(rows), d, d)
    truth_arr = np.asarray(truth, dtype=float).reshape(n, d, d) if truth else None
    return MeasurementGraph(
        n=n, d=d, rows=np.asarray(rows, dtype=np.int64), cols=np.asarray(cols, dtype=np.int64),
        blocks=blocks_arr, truth=truth_arr, good_mask=good, p=p, p1=p1, kappa=kappa, seed=seed,
    )
