"""Rotation-group utilities: projection onto SO(d), random sampling, and the
recovery-threshold constants c(d), c1(d), p_c(d, p1)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = [
    "TheoryConstants",
    "Projection",
    "as_rng",
    "c_bounds",
    "c_of_d",
    "check_rotation",
    "critical_probability",
    "is_rotation",
    "project_to_rotation",
    "sample_haar",
    "sample_vmf",
]

ROTATION_ATOL = 1e-10


def as_rng(seed=None) -> np.random.Generator:
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def is_rotation(R, atol: float = ROTATION_ATOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] < 2:
        return False
    d = R.shape[0]
    ortho = np.linalg.norm(R.T @ R - np.eye(d))
    return bool(ortho <= atol and abs(np.linalg.det(R) - 1.0) <= atol)


def check_rotation(R, atol: float = ROTATION_ATOL) -> np.ndarray:
    """Validate that ``R`` lies in SO(d) and return it as a float array."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, atol):
        raise ValueError("matrix is not a rotation (R^T R != I or det R != 1)")
    return R


@dataclass(frozen=True)
class Projection:
    """Result of projecting a matrix onto SO(d).

    ``degenerate`` is set when the two smallest singular values coincide, in
    which case the nearest rotation is not unique and ``rotation`` is one of
    the minimisers.
    """

    rotation: np.ndarray
    degenerate: bool


def _project_batch(M: np.ndarray, tie_rtol: float):
    U, s, Vt = np.linalg.svd(M)
    det = np.linalg.det(U @ Vt)
    U = U.copy()
    U[..., :, -1] *= np.sign(det)[..., None]
    R = U @ Vt
    scale = np.maximum(s[..., 0], np.finfo(float).tiny)
    degenerate = (s[..., -2] - s[..., -1]) <= tie_rtol * scale
    # a tie only matters when the determinant correction actually flips a column
    degenerate &= det < 0
    return R, degenerate


def project_to_rotation(M, *, tie_rtol: float = 1e-10, return_info: bool = False):
    """Frobenius-nearest rotation to ``M`` via the determinant-corrected SVD.

    With ``M = U S V^T`` the result is ``U J V^T`` where
    ``J = diag(1, ..., 1, det(U V^T))``. Accepts a single ``(d, d)`` matrix or a
    stack ``(..., d, d)``.

    Parameters
    ----------
    M : array_like
        Square matrix or stack of square matrices.
    tie_rtol : float
        Relative gap below which the two smallest singular values are treated
        as equal.
    return_info : bool
        If True return a :class:`Projection` carrying the degeneracy flag
        (single-matrix input only).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected square matrix input, got shape {M.shape}")
    if M.shape[-1] < 2:
        raise ValueError("dimension must be at least 2")
    if not np.all(np.isfinite(M)):
        raise ValueError("input contains non-finite entries")
    if np.any(np.abs(M).reshape(*M.shape[:-2], -1).max(axis=-1) == 0):
        raise ValueError("cannot project the zero matrix")
    R, degenerate = _project_batch(M, tie_rtol)
    if return_info:
        if M.ndim != 2:
            raise ValueError("return_info requires a single matrix")
        return Projection(R, bool(degenerate))
    return R


def sample_haar(d: int, rng=None, size: int | None = None) -> np.ndarray:
    """Draw Haar-distributed rotations from SO(d).

    QR-decomposes a standard Gaussian matrix, fixes the signs using the
    diagonal of the triangular factor, then flips one column when the
    determinant is -1. Returns shape ``(d, d)`` or ``(size, d, d)``.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    rng = as_rng(rng)
    shape = (d, d) if size is None else (size, d, d)
    Z = rng.standard_normal(shape)
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    Q = Q * signs[..., None, :]
    det = np.linalg.det(Q)
    Q[..., :, 0] *= np.sign(det)[..., None]
    return Q


def _rotation_2d(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _quaternion_to_rotation(q):
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def _sample_vmf_so3_offsets(kappa: float, size: int, rng: np.random.Generator) -> np.ndarray:
    # exp(kappa Tr R) = exp(kappa (4 q0^2 - 1)) on unit quaternions, i.e. a
    # Bingham density exp(-x^T A x) with A = diag(0, 4k, 4k, 4k) up to a
    # constant. Exact rejection from an angular central Gaussian envelope
    # (Kent, Ganeiber & Mardia 2013).
    q = 4
    lam = np.array([0.0, 4 * kappa, 4 * kappa, 4 * kappa])
    c = 8 * kappa - 4
    b = 0.5 * (-c + math.sqrt(c * c + 32 * kappa))
    omega = 1.0 + 2.0 * lam / b
    log_m = -(q - b) / 2 + (q / 2) * math.log(q / b)
    out = np.empty((0, q))
    while out.shape[0] < size:
        m = max(16, int(1.3 * (size - out.shape[0])))
        y = rng.standard_normal((m, q)) / np.sqrt(omega)
        x = y / np.linalg.norm(y, axis=1, keepdims=True)
        xax = (x * x) @ lam
        xox = (x * x) @ omega
        log_ratio = -xax + (q / 2) * np.log(xox) - log_m
        keep = np.log(rng.uniform(size=m)) < log_ratio
        out = np.concatenate([out, x[keep]])
    return _quaternion_to_rotation(out[:size])


def sample_vmf(mean, kappa: float, rng=None, size: int | None = None) -> np.ndarray:
    """Draw rotations with density proportional to ``exp(kappa Tr(mean^T R))``.

    Supported for d = 2 (von Mises angle with concentration ``2 kappa``) and
    d = 3 (exact Bingham rejection on unit quaternions). The offset is drawn
    around the identity and left-multiplied by ``mean``.
    """
    mean = np.asarray(mean, dtype=float)
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    rng = as_rng(rng)
    d = mean.shape[-1]
    m = 1 if size is None else size
    if d == 2:
        offsets = _rotation_2d(rng.vonmises(0.0, 2.0 * kappa, size=m))
    elif d == 3:
        offsets = _sample_vmf_so3_offsets(float(kappa), m, rng)
    else:
        raise NotImplementedError("von Mises-Fisher sampling is implemented for d = 2, 3")
    out = mean @ offsets
    return out[0] if size is None else out


def vmf_expected_distance(kappa: float, d: int = 2) -> float:
    """Large-kappa approximation of E||R - mean|| for d = 2."""
    if d != 2:
        raise NotImplementedError
    return math.sqrt(2.0 / (math.pi * kappa))


@dataclass(frozen=True)
class TheoryConstants:
    d: int
    c_d: float
    c1_d: float
    method: str
    mc_samples: int = 0
    mc_stderr: float = 0.0

    @property
    def bounds(self) -> tuple[float, float]:
        return c_bounds(self.d)


def c_bounds(d: int) -> tuple[float, float]:
    """Lower and upper bounds on c(d)."""
    return 1.0 / (2.0 * math.sqrt(2 * (d // 2))), 1.0 / math.sqrt(2 * d)


def _c1(c: float, d: int) -> float:
    return math.sqrt(max(0.0, (1.0 - c * c * d) / 2.0))


def c_of_d(d: int, rng=None, mc_samples: int = 1_000_000, batch: int = 100_000) -> TheoryConstants:
    """Compute c(d) = E[Tr((I - R) / ||I - R||)] / d under Haar measure.

    Closed forms for d = 2 and d = 3; Monte Carlo over ``mc_samples`` Haar
    draws otherwise, using ``Tr((I-R)/||I-R||) = sqrt(Tr(I - R) / 2)``.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if d == 2:
        c = math.sqrt(2.0) / math.pi
        return TheoryConstants(d, c, _c1(c, d), "closed_form")
    if d == 3:
        c = 8.0 * math.sqrt(2.0) / (9.0 * math.pi)
        return TheoryConstants(d, c, _c1(c, d), "closed_form")
    if mc_samples < 100_000:
        raise ValueError("mc_samples must be at least 1e5")
    rng = as_rng(rng)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < mc_samples:
        m = min(batch, mc_samples - done)
        R = sample_haar(d, rng, size=m)
        tr = np.trace(R, axis1=1, axis2=2)
        v = np.sqrt(np.maximum(d - tr, 0.0) / 2.0) / d
        total += v.sum()
        total_sq += (v * v).sum()
        done += m
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    c = float(mean)
    return TheoryConstants(d, c, _c1(c, d), "monte_carlo", done, math.sqrt(var / done))


def critical_probability(d: int, p1: float, constants: TheoryConstants) -> float:
    """Upper bound p_c(d, p1) on the critical good-edge probability.

    ``p1 = 1`` gives the complete-graph threshold p_c(d).
    """
    if constants.d != d:
        raise ValueError("constants were computed for a different dimension")
    if not 0.0 < p1 <= 1.0:
        raise ValueError("p1 must lie in (0, 1]")
    c, c1 = constants.c_d, constants.c1_d
    a = c + 2.0 / math.sqrt(d)
    root = math.sqrt(c1 * c1 + 8.0 * p1 * a / math.sqrt(d))
    frac = (-c1 + root) / (2.0 * math.sqrt(p1) * a)
    return 1.0 - frac * frac


def so3_angle_density(theta, kappa: float):
    """Unnormalised density of the rotation angle of an SO(3) vMF draw."""
    theta = np.asarray(theta, dtype=float)
    return np.exp(2.0 * kappa * (np.cos(theta) - 1.0)) * (1.0 - np.cos(theta))


def so3_mean_trace(kappa: float) -> float:
    """E[Tr R] for the SO(3) vMF offset, by quadrature over the angle."""
    z = integrate.quad(lambda t: so3_angle_density(t, kappa), 0, math.pi, limit=200)[0]
    m = integrate.quad(
        lambda t: (1 + 2 * math.cos(t)) * so3_angle_density(t, kappa), 0, math.pi, limit=200
    )[0]
    return m / z
