import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rotsync.estimators import (
    ESTIMATORS,
    EigSynchronizer,
    LUDSynchronizer,
    SDPSynchronizer,
    gram_from_rotations,
)
from rotsync.measurements import generate


@pytest.fixture(scope="module")
def graph():
    return generate(30, 2, 1.0, 0.7, rng=0)


def test_params_round_trip():
    est = LUDSynchronizer(tol=1e-6, gamma=1.2)
    params = est.get_params()
    assert params["tol"] == 1e-6 and params["gamma"] == 1.2
    est.set_params(max_iter=10)
    assert clone(est).max_iter == 10
    assert EigSynchronizer(normalized=True).get_params() == {"normalized": True}


@pytest.mark.parametrize("name", sorted(ESTIMATORS))
def test_fit_predict_score(name, graph):
    est = ESTIMATORS[name]().fit(graph)
    R = est.predict()
    assert R.shape == (graph.n, 2, 2)
    np.testing.assert_allclose(np.linalg.det(R), 1.0)
    assert est.converged_
    assert -0.1 < est.score(graph) <= 0.0
    np.testing.assert_array_equal(est.fit_predict(graph), R)


def test_lud_beats_least_squares_with_outliers(graph):
    lud = LUDSynchronizer().fit(graph)
    sdp = SDPSynchronizer().fit(graph)
    assert lud.score(graph) > sdp.score(graph)
    assert lud.relative_error(graph) < sdp.relative_error(graph)
    assert lud.n_iter_ == lud.report_.iterations
    assert lud.objective_ == pytest.approx(lud.report_.objective)


def test_random_rounding_option(graph):
    est = LUDSynchronizer(rounding="random", random_state=3).fit(graph)
    assert est.score(graph) > -0.1
    with pytest.raises(ValueError):
        LUDSynchronizer(rounding="nope").fit(graph)


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        LUDSynchronizer().predict()
    with pytest.raises(NotFittedError):
        EigSynchronizer().score(generate(5, 2, rng=0))


def test_input_validation(graph):
    with pytest.raises(TypeError):
        EigSynchronizer().fit(np.eye(4))
    est = EigSynchronizer().fit(graph)
    with pytest.raises(ValueError):
        est.score(graph.replace(truth=None))


def test_gram_from_rotations():
    R = generate(4, 3, rng=1).truth
    G = gram_from_rotations(R)
    np.testing.assert_allclose(G[3:6, 6:9], R[1].T @ R[2])
    np.testing.assert_allclose(np.linalg.eigvalsh(G)[-3:], 4.0)
