"""Robust synchronization of rotations: spectral, least-squares SDP and
least-unsquared-deviation (LUD) relaxations solved by an alternating-direction
augmented Lagrangian method."""

from .admm import ConvergenceReport, SolverOptions, solve_lud, solve_sdp_ls
from .evaluate import mse, relative_error, round_deterministic, round_random
from .measurements import MeasurementGraph, canonicalize_to_identity, generate, load_graph, save_graph
from .so_group import (
    TheoryConstants,
    c_of_d,
    critical_probability,
    project_to_rotation,
    sample_haar,
    sample_vmf,
)
from .spectral import build_connection_laplacian, smallest_eigenvectors, solve_eig

__version__ = "0.1.0"

__all__ = [
    "ConvergenceReport",
    "MeasurementGraph",
    "SolverOptions",
    "TheoryConstants",
    "build_connection_laplacian",
    "c_of_d",
    "canonicalize_to_identity",
    "critical_probability",
    "generate",
    "load_graph",
    "mse",
    "project_to_rotation",
    "relative_error",
    "round_deterministic",
    "round_random",
    "sample_haar",
    "sample_vmf",
    "save_graph",
    "smallest_eigenvectors",
    "solve_eig",
    "solve_lud",
    "solve_sdp_ls",
]
