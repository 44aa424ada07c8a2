"""Alternating-direction augmented Lagrangian solver for the LUD relaxation

    min_G  sum_{i<j} ||G_ij - R_ij||   s.t.  G_ii = I_d,  G >= 0,

and for the least-squares SDP ``max Tr(GC)`` under the same constraints.

The method works on the dual problem

    min  -<y, b> - sum <theta_ij, R_ij>
    s.t. ||theta_ij|| <= 1,  Q(theta) + W + A*(y) = 0,  W >= 0,

updating the multiplier ``y``, the edge duals ``theta``, the slack ``W`` and
finally the primal ``G`` (the multiplier of the dual equality) in turn.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _blocks
from .measurements import MeasurementGraph
from .spectral import negative_part

logger = logging.getLogger(__name__)

__all__ = [
    "AdmState",
    "ConvergenceReport",
    "SolverOptions",
    "initial_state",
    "lud_objective",
    "operator_A",
    "operator_A_adjoint",
    "operator_Q",
    "solve_lud",
    "solve_sdp_ls",
    "target_b",
    "update_G",
    "update_W",
    "update_theta",
    "update_y",
]

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class SolverOptions:
    """Tuning knobs for the ADM iterations.

    ``theta_rule`` selects the edge-dual update: ``"exact"`` minimises the
    augmented Lagrangian over each ``theta_ij`` including the factor 1/2 in
    ``Q(theta)``; ``"simplified"`` uses the closed form
    ``proj_ball(R_ij / mu - Phi_ij)``.
    """

    mu: float = 1.0
    gamma: float = 1.6
    tol: float = 1e-5
    max_iter: int = 5000
    mu_adapt: bool = True
    adapt_every: int = 50
    mu_bounds: tuple[float, float] = (1e-4, 1e4)
    eig_rank_hint: int | None = None
    eig_threshold: float = 1e-9
    theta_rule: str = "exact"
    trace_path: str | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma < GOLDEN:
            raise ValueError(f"gamma must lie in (0, {GOLDEN:.4f})")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.theta_rule not in ("exact", "simplified"):
            raise ValueError("theta_rule must be 'exact' or 'simplified'")


@dataclass
class AdmState:
    """Iterates of the ADM. ``theta`` holds one block per stored edge ``i < j``."""

    n: int
    d: int
    y: np.ndarray
    theta: np.ndarray
    W: np.ndarray
    G: np.ndarray
    mu: float = 1.0
    gamma: float = 1.6
    iter: int = 0
    primal_infeas: float = math.inf
    dual_infeas: float = math.inf
    rank_estimate: int = 0


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    objective: float
    primal_infeas: float
    dual_infeas: float
    mu: float
    rank_estimate: int
    runtime_s: float
    history: list = field(default_factory=list, repr=False)


# -- linear operators ---------------------------------------------------------


def operator_A(G, n: int, d: int) -> np.ndarray:
    """Stack the entries of the diagonal blocks, ordered (i, p, q)."""
    return _blocks.diagonal_blocks(np.asarray(G), n, d).reshape(-1).copy()


def operator_A_adjoint(y, n: int, d: int) -> np.ndarray:
    """Block-diagonal nd x nd matrix whose i-th block is ``y`` reshaped."""
    Y = np.zeros((n, d, n, d))
    idx = np.arange(n)
    Y[idx, :, idx, :] = np.asarray(y).reshape(n, d, d)
    return Y.reshape(n * d, n * d)


def target_b(n: int, d: int) -> np.ndarray:
    return np.tile(np.eye(d).ravel(), n)


def operator_Q(theta, rows, cols, n: int, d: int) -> np.ndarray:
    """Symmetric matrix with ``theta_ij / 2`` at block (i, j) and zero diagonal."""
    return _blocks.assemble(n, d, rows, cols, 0.5 * np.asarray(theta))


def lud_objective(G, g: MeasurementGraph) -> float:
    diff = _blocks.extract(G, g.n, g.d, g.rows, g.cols) - g.blocks
    return float(np.sqrt(np.einsum("kab,kab->k", diff, diff)).sum())


def ls_objective(G, g: MeasurementGraph) -> float:
    """``Tr(GC)`` with ``C_ij = R_ij`` on both orientations of every edge."""
    blocks = _blocks.extract(G, g.n, g.d, g.rows, g.cols)
    return float(2.0 * np.einsum("kab,kab->", blocks, g.blocks))


# -- state and updates ---------------------------------------------------------


def initial_state(g: MeasurementGraph, opts: SolverOptions | None = None) -> AdmState:
    """``y = 0, theta = 0, W = 0, G = I``."""
    opts = opts or SolverOptions()
    N = g.n * g.d
    return AdmState(
        n=g.n, d=g.d,
        y=np.zeros(g.n * g.d * g.d),
        theta=np.zeros((g.n_edges, g.d, g.d)),
        W=np.zeros((N, N)),
        G=np.eye(N),
        mu=opts.mu, gamma=opts.gamma,
    )


def _q_matrix(state: AdmState, g: MeasurementGraph) -> np.ndarray:
    return operator_Q(state.theta, g.rows, g.cols, state.n, state.d)


def update_y(state: AdmState, g: MeasurementGraph, Qmat=None) -> np.ndarray:
    """``y = -A(Q(theta) + W) - (A(G) - b) / mu``."""
    n, d = state.n, state.d
    if Qmat is None:
        Qmat = _q_matrix(state, g)
    return -operator_A(Qmat + state.W, n, d) - (operator_A(state.G, n, d) - target_b(n, d)) / state.mu


def update_theta(state: AdmState, g: MeasurementGraph, y_new, rule: str = "exact") -> np.ndarray:
    """Per-edge minimiser of the augmented Lagrangian over ``||theta_ij|| <= 1``.

    With ``Phi = W + A*(y) + G / mu`` the unconstrained minimiser is
    ``s (R_ij / mu - Phi_ij)`` (``s = 2`` for ``rule="exact"``, ``s = 1`` for
    ``rule="simplified"``); outside the unit ball both rules return
    ``(R_ij - mu Phi_ij) / ||R_ij - mu Phi_ij||``, or zero if that vanishes.
    """
    n, d, mu = state.n, state.d, state.mu
    # A*(y) is block diagonal, so it never touches the off-diagonal Phi_ij
    phi = _blocks.extract(state.W + state.G / mu, n, d, g.rows, g.cols)
    scale = 2.0 if rule == "exact" else 1.0
    inner = scale * (g.blocks / mu - phi)
    inner_norm = np.sqrt(np.einsum("kab,kab->k", inner, inner))
    outer = g.blocks - mu * phi
    outer_norm = np.sqrt(np.einsum("kab,kab->k", outer, outer))
    theta = np.empty_like(inner)
    interior = inner_norm <= 1.0
    theta[interior] = inner[interior]
    out = ~interior
    safe = np.where(outer_norm[out] > 0, outer_norm[out], 1.0)
    theta[out] = outer[out] / safe[:, None, None]
    theta[out & (outer_norm == 0)] = 0.0
    return theta


def update_W(state: AdmState, Qmat, y_new, *, threshold: float = 1e-9, rank_hint=None):
    """PSD projection of ``H = -Q(theta) - A*(y) - G / mu``.

    Only eigenpairs below ``-threshold`` are computed:
    ``W = H - V_- diag(w_-) V_-^T``. Returns ``(W, H, rank)`` where ``rank`` is
    the number of negative eigenvalues removed.
    """
    n, d = state.n, state.d
    H = -Qmat - operator_A_adjoint(y_new, n, d) - state.G / state.mu
    H = 0.5 * (H + H.T)
    w, V = negative_part(H, threshold=threshold, rank_hint=rank_hint)
    W = H - (V * w) @ V.T
    return W, H, int(w.size)


def update_G(state: AdmState, W_new, H) -> np.ndarray:
    """``G = (1 - gamma) G + gamma mu (W - H)``."""
    return (1.0 - state.gamma) * state.G + state.gamma * state.mu * (W_new - H)


# -- driver ----------------------------------------------------------------------


def _psd_violation(G) -> float:
    w, _ = negative_part(0.5 * (G + G.T), threshold=0.0)
    return float(np.sqrt(np.sum(w * w))) if w.size else 0.0


def _run(g: MeasurementGraph, opts: SolverOptions, *, lud: bool):
    if g.n_edges == 0:
        raise ValueError("graph has no edges")
    t0 = time.perf_counter()
    n, d = g.n, g.d
    state = initial_state(g, opts)
    b = target_b(n, d)
    b_scale = 1.0 + np.linalg.norm(b)
    c_scale = 1.0 + math.sqrt(2.0 * g.n_edges * d)
    objective = lud_objective if lud else ls_objective
    if not lud:
        # linear objective: Q(theta) with theta_ij = 2 R_ij is exactly C
        state.theta = 2.0 * g.blocks.copy()
    rank_hint = opts.eig_rank_hint or d
    mu_lo, mu_hi = opts.mu_bounds

    history = []
    trace_fh = trace = None
    if opts.trace_path:
        trace_fh = open(opts.trace_path, "w", newline="")
        trace = csv.writer(trace_fh)
        trace.writerow(["iter", "objective", "primal_infeas", "dual_infeas", "mu", "rank_estimate"])

    best = None
    converged = False
    ratio_log = 0.0
    try:
        Qmat = _q_matrix(state, g)
        for k in range(1, opts.max_iter + 1):
            y = update_y(state, g, Qmat)
            if lud:
                state.theta = update_theta(state, g, y, rule=opts.theta_rule)
                Qmat = _q_matrix(state, g)
            W, H, rank = update_W(state, Qmat, y, threshold=opts.eig_threshold,
                                  rank_hint=rank_hint)
            G_new = update_G(state, W, H)
            # dual residual Q + W + A*(y) = W - H - G_old / mu
            dual = np.linalg.norm(W - H - state.G / state.mu) / c_scale
            state.y, state.W, state.G = y, W, G_new
            state.iter = k
            state.rank_estimate = rank
            rank_hint = max(d, rank + 1)
            primal_eq = np.linalg.norm(operator_A(G_new, n, d) - b) / b_scale
            state.primal_infeas, state.dual_infeas = primal_eq, dual

            check = max(primal_eq, dual) < opts.tol or k % opts.adapt_every == 0
            if check:
                state.primal_infeas = primal_eq + _psd_violation(G_new) / (1.0 + np.linalg.norm(G_new))
            score = max(state.primal_infeas, state.dual_infeas)
            obj = objective(G_new, g)
            history.append((k, obj, state.primal_infeas, dual, state.mu, rank))
            if trace is not None:
                trace.writerow([k, repr(obj), repr(state.primal_infeas), repr(dual), repr(state.mu), rank])
            if check and (best is None or score < best[0]):
                best = (score, replace(state, G=G_new.copy()))
            if check and score < opts.tol:
                converged = True
                break

            if opts.mu_adapt and dual > 0 and primal_eq > 0:
                ratio_log += math.log(primal_eq / dual)
                if k % opts.adapt_every == 0:
                    mean_ratio = math.exp(ratio_log / opts.adapt_every)
                    ratio_log = 0.0
                    if mean_ratio > 10.0:
                        state.mu = max(mu_lo, state.mu / 2.0)
                    elif mean_ratio < 0.1:
                        state.mu = min(mu_hi, state.mu * 2.0)
    finally:
        if trace_fh is not None:
            trace_fh.close()

    if not converged and best is not None:
        logger.warning("ADM stopped after %d iterations without reaching tol=%g (best %.3g)",
                       state.iter, opts.tol, best[0])
        state = best[1]
    report = ConvergenceReport(
        converged=converged,
        iterations=state.iter,
        objective=objective(state.G, g),
        primal_infeas=state.primal_infeas,
        dual_infeas=state.dual_infeas,
        mu=state.mu,
        rank_estimate=state.rank_estimate,
        runtime_s=time.perf_counter() - t0,
        history=history,
    )
    return state, report


def solve_lud(g: MeasurementGraph, opts: SolverOptions | None = None, *, return_state: bool = False):
    """Solve the LUD semidefinite relaxation.

    Returns ``(G, report)`` where ``G`` is the nd x nd Gram estimate and
    ``report`` a :class:`ConvergenceReport` whose ``objective`` is
    ``sum_{i<j} ||G_ij - R_ij||``. Non-convergence returns the best checked
    iterate with ``report.converged = False``.
    """
    state, report = _run(g, opts or SolverOptions(), lud=True)
    if return_state:
        return state.G, report, state
    return state.G, report


def solve_sdp_ls(g: MeasurementGraph, opts: SolverOptions | None = None, *, return_state: bool = False):
    """Solve ``max Tr(GC)`` s.t. ``G_ii = I``, ``G >= 0`` by the same ADM.

    The edge-dual step is constant (``theta_ij = 2 R_ij`` so that
    ``Q(theta) = C``); ``report.objective`` is ``Tr(GC)``.
    """
    state, report = _run(g, opts or SolverOptions(), lud=False)
    if return_state:
        return state.G, report, state
    return state.G, report
