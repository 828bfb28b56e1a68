import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dpdlms.estimators import (
    DiffusionLMS,
    DoublePrivateDiffusionLMS,
    ProportionateDiffusionLMS,
    check_network_data,
)
from dpdlms.signal import ScenarioConfig, generate_scenario
from dpdlms.topology import TopologySpec, build_topology

ESTIMATORS = [
    DiffusionLMS(step_size=0.02),
    ProportionateDiffusionLMS(step_size=0.3),
    DoublePrivateDiffusionLMS(step_size=0.3, variant="v2"),
    DoublePrivateDiffusionLMS(step_size=0.3, variant="v1"),
]


@pytest.fixture(scope="module")
def stream():
    sc = generate_scenario(ScenarioConfig(dim=5, n_agents=8, horizon=600, master_seed=3))
    X, y = sc.streams().take(600)
    return X, y, sc.omega_at(0)


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: f"{type(e).__name__}-{e.get_params().get('variant', '')}")
def test_fit_predict(est, stream):
    X, y, w_true = stream
    est = clone(est).fit(X, y)
    assert est.coef_.shape == (8, 5) and est.n_iter_ == 600
    assert est.n_agents_ == 8 and est.n_features_in_ == 5
    assert np.linalg.norm(est.coef_.mean(axis=0) - w_true) < 0.3 * np.linalg.norm(w_true)
    assert est.predict(X[0]).shape == (8,)
    assert est.predict(X[:10]).shape == (10, 8)
    assert est.score(X[-50:, 0], y[-50:, 0]) > 0.8


@pytest.mark.parametrize("est", ESTIMATORS[:3], ids=lambda e: type(e).__name__)
def test_partial_fit_continues(est, stream):
    X, y, _ = stream
    whole = clone(est).fit(X, y)
    split = clone(est).partial_fit(X[:200], y[:200]).partial_fit(X[200:], y[200:])
    assert split.n_iter_ == 600
    np.testing.assert_allclose(split.coef_, whole.coef_, rtol=1e-10, atol=1e-12)


def test_get_params_and_clone():
    est = DoublePrivateDiffusionLMS(variant="v1", dp_noise_variance=0.2)
    params = est.get_params()
    assert params["variant"] == "v1" and params["dp_noise_variance"] == 0.2 and params["mix"] == 0.005
    twin = clone(est).set_params(step_size=0.5)
    assert twin.step_size == 0.5 and est.step_size == 0.1


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DiffusionLMS().predict(np.zeros((2, 3)))


def test_input_validation(stream):
    X, y, _ = stream
    with pytest.raises(ValueError, match=r"\(T, N, L\)"):
        check_network_data(X[0], y[0])
    with pytest.raises(ValueError, match="y must have shape"):
        check_network_data(X, y[:, :3])
    with pytest.raises(ValueError):
        check_network_data(np.full_like(X, np.nan), y)
    est = DiffusionLMS().fit(X[:20], y[:20])
    with pytest.raises(ValueError, match="features"):
        est.predict(np.zeros((3, 4)))
    with pytest.raises(ValueError, match="expected data"):
        est.partial_fit(X[:5, :, :4], y[:5])


def test_explicit_topology(stream):
    X, y, _ = stream
    top = build_topology(TopologySpec(kind="ring", n_agents=8))
    est = DiffusionLMS(topology=top).fit(X[:50], y[:50])
    assert est.topology_ is top
    with pytest.raises(ValueError, match="agents"):
        DiffusionLMS(topology=top).fit(X[:50, :4], y[:50, :4])


def test_invalid_variant(stream):
    X, y, _ = stream
    with pytest.raises(ValueError):
        DoublePrivateDiffusionLMS(variant="v3").fit(X[:10], y[:10])
