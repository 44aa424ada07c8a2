import csv

import numpy as np
import pytest

from oracles import angle_of, cvx_relaxation, dense_psd_part, grid_optimum, lud_cost
from rotsync.admm import (
    SolverOptions,
    initial_state,
    lud_objective,
    ls_objective,
    operator_A,
    operator_A_adjoint,
    operator_Q,
    solve_lud,
    solve_sdp_ls,
    target_b,
    update_G,
    update_theta,
    update_W,
    update_y,
)
from rotsync.estimators import gram_from_rotations
from rotsync.evaluate import relative_error
from rotsync.measurements import MeasurementGraph, canonicalize_to_identity, generate
from rotsync.so_group import sample_haar

TIGHT = SolverOptions(tol=1e-9, max_iter=20_000)


def _identity_pair(d=2):
    return MeasurementGraph(2, d, [0], [1], np.eye(d)[None])


def test_adjoint_identity():
    rng = np.random.default_rng(0)
    n, d = 5, 3
    G = rng.standard_normal((n * d, n * d))
    y = rng.standard_normal(n * d * d)
    lhs = operator_A(G, n, d) @ y
    rhs = np.sum(G * operator_A_adjoint(y, n, d))
    assert lhs == pytest.approx(rhs, rel=1e-12)
    np.testing.assert_array_equal(operator_A(np.eye(n * d), n, d), target_b(n, d))


def test_A_of_adjoint_is_identity():
    y = np.random.default_rng(1).standard_normal(4 * 9)
    np.testing.assert_array_equal(operator_A(operator_A_adjoint(y, 4, 3), 4, 3), y)


def test_update_y_examples():
    g = generate(5, 2, rng=0)
    state = initial_state(g, SolverOptions(mu=1.0))
    np.testing.assert_array_equal(update_y(state, g), 0.0)
    state.G = 2 * np.eye(10)
    np.testing.assert_array_equal(update_y(state, g), -target_b(5, 2))


def test_update_y_matches_dense_assembly():
    rng = np.random.default_rng(2)
    g = generate(6, 3, 0.7, 0.5, rng=rng)
    state = initial_state(g, SolverOptions(mu=0.3))
    state.theta = rng.standard_normal(state.theta.shape)
    A = rng.standard_normal(state.W.shape)
    state.W, state.G = A + A.T, A @ A.T
    Q = np.zeros((18, 18))
    for (i, j, _), t in zip(g.edges(), state.theta):
        Q[3 * i:3 * i + 3, 3 * j:3 * j + 3] = t / 2
        Q[3 * j:3 * j + 3, 3 * i:3 * i + 3] = t.T / 2
    M = Q + state.W + (state.G - np.eye(18)) / state.mu
    ref = np.concatenate([M[3 * i:3 * i + 3, 3 * i:3 * i + 3].ravel() for i in range(6)])
    np.testing.assert_allclose(update_y(state, g), -ref, atol=1e-12)


def test_operator_Q_is_symmetric_with_half_blocks():
    g = generate(4, 2, rng=1)
    theta = np.random.default_rng(2).standard_normal((g.n_edges, 2, 2))
    Q = operator_Q(theta, g.rows, g.cols, g.n, g.d)
    np.testing.assert_array_equal(Q, Q.T)
    i, j = g.rows[0], g.cols[0]
    np.testing.assert_array_equal(Q[2 * i:2 * i + 2, 2 * j:2 * j + 2], theta[0] / 2)
    np.testing.assert_array_equal(Q[:2, :2], 0.0)


def test_first_iteration_from_identity_start():
    g = _identity_pair()
    opts = SolverOptions(mu=10.0)
    state = initial_state(g, opts)
    y = update_y(state, g)
    np.testing.assert_array_equal(y, 0.0)
    theta = update_theta(state, g, y, rule="exact")
    Q = operator_Q(theta, g.rows, g.cols, 2, 2)
    W, H, rank = update_W(state, Q, y)
    # H = -[[I, I], [I, I]] / 10: eigenvalues -0.2 (twice) and 0 (twice)
    np.testing.assert_allclose(H, -np.kron(np.ones((2, 2)), np.eye(2)) / 10, atol=1e-15)
    assert rank == 2
    np.testing.assert_allclose(W, 0.0, atol=1e-15)
    G = update_G(state, W, H)
    np.testing.assert_allclose(G, np.eye(4) + 1.6 * np.kron([[0, 1], [1, 0]], np.eye(2)), atol=1e-14)


def test_theta_rules_on_simple_instance():
    g = _identity_pair()
    state = initial_state(g, SolverOptions(mu=10.0))
    y = np.zeros(8)
    np.testing.assert_allclose(update_theta(state, g, y, rule="simplified")[0], np.eye(2) / 10)
    np.testing.assert_allclose(update_theta(state, g, y, rule="exact")[0], np.eye(2) / 5)


def test_theta_projection_branch():
    g = _identity_pair()
    state = initial_state(g, SolverOptions(mu=1.0))
    state.G = np.zeros((4, 4))
    for rule in ("exact", "simplified"):
        np.testing.assert_allclose(update_theta(state, g, np.zeros(8), rule=rule)[0],
                                   np.eye(2) / np.sqrt(2))


def test_theta_zero_at_boundary():
    g = _identity_pair()
    state = initial_state(g, SolverOptions(mu=2.0))
    # Phi_01 = G_01 / mu = R / mu
    state.G = np.kron(np.ones((2, 2)), np.eye(2))
    for rule in ("exact", "simplified"):
        np.testing.assert_array_equal(update_theta(state, g, np.zeros(8), rule=rule), 0.0)


def test_theta_stays_in_unit_ball():
    g = generate(10, 3, 1.0, 0.3, rng=3)
    state = initial_state(g, SolverOptions(mu=0.01))
    state.G = np.random.default_rng(4).standard_normal(state.G.shape)
    theta = update_theta(state, g, state.y)
    assert np.max(np.linalg.norm(theta, axis=(1, 2))) <= 1 + 1e-12


def test_theta_exact_rule_minimises_edge_term():
    # brute-force the per-edge objective -<theta, R> + (mu/2)||theta/2 + Phi||^2 (both orientations)
    rng = np.random.default_rng(5)
    g = _identity_pair()
    g = g.replace(blocks=sample_haar(2, rng)[None])
    state = initial_state(g, SolverOptions(mu=0.7))
    state.W = 0.3 * rng.standard_normal((4, 4))
    state.W = state.W + state.W.T
    theta = update_theta(state, g, state.y)[0]
    phi = (state.W + state.G / state.mu)[0:2, 2:4]
    R, mu = g.blocks[0], state.mu

    def f(t):
        return -np.sum(t * R) + mu * np.sum((t / 2 + phi) ** 2)

    samples = rng.standard_normal((200_000, 2, 2))
    samples /= np.maximum(1.0, np.linalg.norm(samples, axis=(1, 2)))[:, None, None]
    vals = -np.einsum("kab,ab->k", samples, R) + mu * np.sum((samples / 2 + phi) ** 2, axis=(1, 2))
    assert f(theta) <= vals.min() + 1e-12


def test_update_W_matches_dense_projection():
    g = generate(15, 3, 0.6, 0.5, rng=6)
    state = initial_state(g, SolverOptions(mu=0.5))
    rng = np.random.default_rng(7)
    state.G = dense_psd_part(rng.standard_normal((45, 45)))
    theta = rng.standard_normal((g.n_edges, 3, 3))
    Q = operator_Q(theta, g.rows, g.cols, g.n, g.d)
    y = rng.standard_normal(g.n * 9)
    y = (y.reshape(g.n, 3, 3) + y.reshape(g.n, 3, 3).transpose(0, 2, 1)).ravel()
    W, H, rank = update_W(state, Q, y, threshold=1e-12)
    np.testing.assert_allclose(W, dense_psd_part(H), atol=1e-9)
    assert rank == np.sum(np.linalg.eigvalsh(H) < -1e-12)


def test_update_W_examples():
    g = _identity_pair()
    state = initial_state(g, SolverOptions(mu=1.0))
    state.G = np.zeros((4, 4))
    H = np.diag([1.0, -1.0, 0.0, 0.0])
    W, H_out, rank = update_W(state, -H, np.zeros(8))
    np.testing.assert_allclose(H_out, H)
    np.testing.assert_allclose(W, np.diag([1.0, 0.0, 0.0, 0.0]), atol=1e-15)
    assert rank == 1
    P = np.diag([3.0, 2.0, 1.0, 0.5])
    W, _, rank = update_W(state, -P, np.zeros(8))
    np.testing.assert_allclose(W, P)
    assert rank == 0


def test_update_G_identities():
    rng = np.random.default_rng(9)
    g = generate(5, 2, rng=rng)
    state = initial_state(g, SolverOptions(mu=0.7, gamma=1.3))
    A = rng.standard_normal((10, 10))
    state.G = A @ A.T
    theta = rng.standard_normal(state.theta.shape)
    Q = operator_Q(theta, g.rows, g.cols, 5, 2)
    y = rng.standard_normal(20).reshape(5, 2, 2)
    y = (y + y.transpose(0, 2, 1)).ravel()
    W, H, _ = update_W(state, Q, y)
    G = update_G(state, W, H)
    alt = state.G + state.gamma * state.mu * (Q + W + operator_A_adjoint(y, 5, 2))
    np.testing.assert_allclose(G, alt, atol=1e-10)
    state.gamma = 1.0
    np.testing.assert_allclose(update_G(state, W, H), state.mu * (W - H), atol=1e-12)
    # at a dual-feasible point the primal iterate does not move
    state.gamma = 1.3
    W0 = dense_psd_part(A + A.T)
    H0 = W0 - state.G / state.mu
    np.testing.assert_allclose(update_G(state, W0, H0), state.G, atol=1e-12)


def test_iterates_stay_symmetric_and_W_psd():
    g = generate(20, 2, 1.0, 0.5, rng=8)
    opts = SolverOptions(max_iter=30, tol=1e-14)
    _, _, state = solve_lud(g, opts, return_state=True)
    np.testing.assert_allclose(state.G, state.G.T, atol=1e-12)
    np.testing.assert_allclose(state.W, state.W.T, atol=1e-12)
    assert np.linalg.eigvalsh(state.W)[0] >= -1e-8
    assert np.max(np.linalg.norm(state.theta, axis=(1, 2))) <= 1 + 1e-12


def test_solution_is_feasible():
    g = generate(30, 3, 1.0, 0.6, rng=9)
    G, report = solve_lud(g, SolverOptions(tol=1e-7))
    assert report.converged
    diag = np.array([G[3 * i:3 * i + 3, 3 * i:3 * i + 3] for i in range(g.n)])
    np.testing.assert_allclose(diag, np.broadcast_to(np.eye(3), diag.shape), atol=1e-5)
    assert np.linalg.eigvalsh(G)[0] >= -1e-5
    assert report.objective == pytest.approx(lud_objective(G, g))


def test_noiseless_recovers_true_gram():
    g = generate(25, 2, 1.0, 1.0, rng=10)
    G, report = solve_lud(g, SolverOptions(tol=1e-8))
    assert report.converged
    assert np.linalg.norm(G - g.true_gram()) / np.linalg.norm(g.true_gram()) < 1e-5


def test_conjugation_equivariance():
    # R_i -> R_i Q maps the measured ratios to Q^T R_ij Q and the optimum to the
    # conjugated Gram matrix with the same objective value
    g = generate(20, 3, 1.0, 0.5, rng=11)
    Q = sample_haar(3, 12)
    h = g.replace(blocks=Q.T @ g.blocks @ Q, truth=g.truth @ Q)
    Gg, rg = solve_lud(g, TIGHT)
    Gh, rh = solve_lud(h, TIGHT)
    assert rh.objective == pytest.approx(rg.objective, rel=1e-6)
    big = np.kron(np.eye(g.n), Q)
    np.testing.assert_allclose(big.T @ Gg @ big, Gh, atol=1e-4)


def test_equivariance_under_canonicalization():
    g = generate(25, 2, 1.0, 0.6, rng=17)
    h = canonicalize_to_identity(g)
    Gg, rg = solve_lud(g, TIGHT)
    Gh, rh = solve_lud(h, TIGHT)
    assert abs(rg.objective - rh.objective) <= 1e-6
    big = np.zeros((50, 50))
    for i, T in enumerate(g.truth):
        big[2 * i:2 * i + 2, 2 * i:2 * i + 2] = T
    back = big.T @ Gh @ big
    assert abs(relative_error(Gg, g.true_gram()) - relative_error(back, g.true_gram())) <= 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_lud_value_against_angle_grid(seed):
    # the relaxation can only be at or below the best assignment of SO(2) angles
    g = generate(4, 2, 1.0, 0.5, rng=seed)
    phis = angle_of(g.blocks)
    best, _ = grid_optimum(lambda th: lud_cost(th, g.rows, g.cols, phis), g.n)
    G, report = solve_lud(g, TIGHT)
    assert report.objective <= best + 1e-3
    if np.sum(np.linalg.eigvalsh(G) > 1e-4) == 2:
        assert report.objective == pytest.approx(best, abs=1e-3)


@pytest.mark.parametrize("seed", [3, 4])
def test_lud_value_against_interior_point(seed):
    pytest.importorskip("cvxpy")
    g = generate(6, 2, 1.0, 0.5, rng=seed)
    _, report = solve_lud(g, TIGHT)
    assert report.objective == pytest.approx(cvx_relaxation(g, "lud"), abs=1e-3)


def test_ls_value_against_interior_point():
    pytest.importorskip("cvxpy")
    g = generate(6, 3, 1.0, 0.5, rng=5)
    G, report = solve_sdp_ls(g, TIGHT)
    assert report.objective == pytest.approx(ls_objective(G, g))
    assert report.objective == pytest.approx(cvx_relaxation(g, "ls"), abs=1e-3)


def test_ls_objective_of_true_gram():
    g = generate(8, 2, rng=13)
    G = gram_from_rotations(g.truth)
    assert ls_objective(G, g) == pytest.approx(2 * g.n_edges * 2)


def test_simplified_rule_still_runs():
    g = generate(20, 2, 1.0, 0.9, rng=14)
    _, report = solve_lud(g, SolverOptions(theta_rule="simplified", max_iter=200))
    assert np.isfinite(report.objective)


def test_trace_file(tmp_path):
    g = generate(10, 2, rng=15)
    path = tmp_path / "trace.csv"
    _, report = solve_lud(g, SolverOptions(max_iter=40, tol=1e-14, trace_path=str(path)))
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "objective", "primal_infeas", "dual_infeas", "mu", "rank_estimate"]
    assert len(rows) == report.iterations + 1 == 41
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 41))


def test_non_convergence_is_reported():
    g = generate(20, 2, 1.0, 0.5, rng=16)
    G, report = solve_lud(g, SolverOptions(max_iter=5, tol=1e-14))
    assert not report.converged
    assert report.iterations <= 5
    assert np.all(np.isfinite(G))


@pytest.mark.parametrize("kwargs", [dict(gamma=1.7), dict(gamma=0.0), dict(tol=0.0),
                                    dict(mu=-1.0), dict(max_iter=0), dict(theta_rule="x")])
def test_options_validation(kwargs):
    with pytest.raises(ValueError):
        SolverOptions(**kwargs)
