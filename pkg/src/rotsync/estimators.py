"""scikit-learn style wrappers around the synchronization solvers.

Each estimator is fitted on a :class:`~rotsync.measurements.MeasurementGraph`
and exposes the recovered rotations as ``rotations_``::

    est = LUDSynchronizer(tol=1e-6).fit(graph)
    est.rotations_          # (n, d, d), defined up to a global rotation
    est.score(graph)        # -MSE against graph.truth
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .admm import SolverOptions, solve_lud, solve_sdp_ls
from .evaluate import mse, relative_error, round_deterministic, round_random
from .measurements import MeasurementGraph
from .spectral import solve_eig

__all__ = [
    "EigSynchronizer",
    "LUDSynchronizer",
    "SDPSynchronizer",
    "check_graph",
    "gram_from_rotations",
]


def check_graph(X, *, require_truth: bool = False) -> MeasurementGraph:
    """Validate estimator input and return it as a MeasurementGraph."""
    if not isinstance(X, MeasurementGraph):
        raise TypeError(f"expected a MeasurementGraph, got {type(X).__name__}")
    if X.n_edges == 0:
        raise ValueError("measurement graph has no edges")
    if not np.all(np.isfinite(X.blocks)):
        raise ValueError("measurement blocks contain non-finite values")
    if require_truth and X.truth is None:
        raise ValueError("graph carries no ground truth")
    return X


def gram_from_rotations(R) -> np.ndarray:
    """``G_ij = R_i^T R_j`` for an ``(n, d, d)`` stack."""
    Rmat = np.concatenate(list(np.asarray(R)), axis=1)
    return Rmat.T @ Rmat


class _Synchronizer(BaseEstimator):
    method = ""

    def predict(self, X=None):
        """Recovered rotations; ``X`` is accepted for API symmetry and ignored."""
        check_is_fitted(self, "rotations_")
        return self.rotations_

    def fit_predict(self, X, y=None):
        return self.fit(X, y).rotations_

    def score(self, X, y=None):
        """Negative registered MSE against ``y`` (default: ``X.truth``)."""
        check_is_fitted(self, "rotations_")
        truth = X.truth if y is None else y
        if truth is None:
            raise ValueError("no ground truth to score against")
        return -mse(self.rotations_, truth).mse


class EigSynchronizer(_Synchronizer):
    """Spectral relaxation: d smallest eigenvectors of the connection Laplacian."""

    method = "eig"

    def __init__(self, normalized: bool = False):
        self.normalized = normalized

    def fit(self, X, y=None):
        g = check_graph(X)
        self.rotations_ = solve_eig(g, normalized=self.normalized)
        self.gram_ = gram_from_rotations(self.rotations_)
        self.converged_ = True
        self.n_iter_ = 0
        return self


class _AdmSynchronizer(_Synchronizer):
    def __init__(self, mu=1.0, gamma=1.6, tol=1e-5, max_iter=5000, mu_adapt=True,
                 rounding="deterministic", theta_rule="exact", random_state=None):
        self.mu = mu
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.mu_adapt = mu_adapt
        self.rounding = rounding
        self.theta_rule = theta_rule
        self.random_state = random_state

    def _options(self) -> SolverOptions:
        return SolverOptions(mu=self.mu, gamma=self.gamma, tol=self.tol, max_iter=self.max_iter,
                             mu_adapt=self.mu_adapt, theta_rule=self.theta_rule)

    def _solve(self, g, opts):
        raise NotImplementedError

    def fit(self, X, y=None):
        if self.rounding not in ("deterministic", "random"):
            raise ValueError("rounding must be 'deterministic' or 'random'")
        g = check_graph(X)
        G, report = self._solve(g, self._options())
        if self.rounding == "deterministic":
            est = round_deterministic(G, g.d, source=self.method)
        else:
            est = round_random(G, g.d, self.random_state, source=self.method)
        self.gram_ = G
        self.report_ = report
        self.rotations_ = est.rotations
        self.converged_ = report.converged
        self.n_iter_ = report.iterations
        self.objective_ = report.objective
        return self

    def relative_error(self, X) -> float:
        """Gram relative error against the true Gram matrix of ``X``."""
        check_is_fitted(self, "gram_")
        return relative_error(self.gram_, check_graph(X, require_truth=True).true_gram())


class LUDSynchronizer(_AdmSynchronizer):
    """Least unsquared deviations: ``min sum ||G_ij - R_ij||`` over the relaxed Gram set."""

    method = "lud"

    def _solve(self, g, opts):
        return solve_lud(g, opts)


class SDPSynchronizer(_AdmSynchronizer):
    """Least-squares semidefinite relaxation ``max Tr(GC)``."""

    method = "sdp"

    def _solve(self, g, opts):
        return solve_sdp_ls(g, opts)


ESTIMATORS = {"eig": EigSynchronizer, "sdp": SDPSynchronizer, "lud": LUDSynchronizer}
