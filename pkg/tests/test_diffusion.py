import numpy as np
import pytest

from dpdlms.diffusion import (
    AlgorithmSpec,
    ArraySource,
    Collect,
    SimulationError,
    adapt,
    combine,
    exchange,
    propagate,
    run,
    simulate,
)
from dpdlms.gain import GainParams, network_update_directions
from dpdlms.privacy import PrivacyConfig
from dpdlms.signal import ScenarioConfig, generate_scenario
from dpdlms.topology import TopologySpec, build_topology, uniform_weights

QUIET = PrivacyConfig(dp_noise_variance=0.05, channel_noise_variance=0.0)

SPECS = [
    AlgorithmSpec("dlms", "dlms", None, 0.01),
    AlgorithmSpec("pg", "pgcdlms", None, 0.05),
    AlgorithmSpec("oracle", "dp-pgcdlms", "oracle", 1.0),
    AlgorithmSpec("v1", "dp-pgcdlms", "v1", 0.1),
    AlgorithmSpec("v2", "dp-pgcdlms", "v2", 0.1),
]


@pytest.fixture(scope="module")
def small():
    top = build_topology(TopologySpec(kind="random-geometric", n_agents=6, seed=3))
    return top, uniform_weights(top)


def _scenario(n, horizon, seed=0, dim=4, **kw):
    return generate_scenario(ScenarioConfig(dim=dim, n_agents=n, horizon=horizon, master_seed=seed, **kw))


def _reference_run(spec, scenario, top, w, privacy, params):
    """Iterate the per-node operations directly."""
    n, L = scenario.n_agents, scenario.dim
    mu = spec.step_sizes(n)
    omega = np.zeros((n, L))
    u_all, d_all = scenario.streams().take(scenario.horizon)
    out = []
    for i in range(scenario.horizon):
        u, d = u_all[i], d_all[i]
        P = network_update_directions(omega, u, d, w.c)
        phis, gains = [], []
        for k in range(n):
            phi, G = adapt(omega[k], P[k], spec, mu[k], params)
            phis.append(phi)
            gains.append(G.diag)
        inbox = exchange(np.array(phis), np.array(gains), P, omega, u, d, i, top, w, spec, privacy, params)
        omega = np.array([combine(inbox[k], w.a[:, k]) for k in range(n)])
        out.append(omega)
    return np.array(out)


def test_spec_validation():
    with pytest.raises(ValueError):
        AlgorithmSpec("x", "lms")
    with pytest.raises(ValueError):
        AlgorithmSpec("x", "dp-pgcdlms", None)
    with pytest.raises(ValueError):
        AlgorithmSpec("x", "dlms", None, (0.1, -0.1))
    assert np.array_equal(AlgorithmSpec("x", step_size=(0.1, 0.2)).step_sizes(2), [0.1, 0.2])


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_adapt_zero_direction_is_identity(spec):
    omega = np.array([0.3, -1.0, 2.0])
    phi, _ = adapt(omega, np.zeros(3), spec, 0.5, GainParams())
    np.testing.assert_array_equal(phi, omega)


def test_adapt_dlms_hand_step():
    u = np.zeros(5)
    u[0] = 1.0
    p = u * (1.0 - u @ np.zeros(5))
    phi, G = adapt(np.zeros(5), p, AlgorithmSpec("d"), 0.5, GainParams())
    np.testing.assert_array_equal(phi, [0.5, 0, 0, 0, 0])
    np.testing.assert_array_equal(G.diag, np.ones(5))


def test_adapt_normalized(rng):
    spec = AlgorithmSpec("n", "pgcdlms", None, 0.1, normalize_phi=True)
    phi, _ = adapt(rng.standard_normal(6), rng.standard_normal(6), spec, 0.1, GainParams())
    assert abs(np.linalg.norm(phi) - 1) < 1e-12
    phi0, _ = adapt(np.zeros(3), np.zeros(3), spec, 0.1, GainParams())
    np.testing.assert_array_equal(phi0, np.zeros(3))


def test_combine_examples():
    x = np.array([1.0, 2.0])
    assert np.allclose(combine({0: x, 1: x, 2: x}, [0.2, 0.3, 0.5]), x)
    assert np.array_equal(combine({0: x}, [1.0]), x)
    np.testing.assert_allclose(combine({0: np.array([1.0, 0.0]), 1: np.array([0.0, 1.0])}, [0.5, 0.5]), [0.5, 0.5])


def test_combine_incomplete_inbox():
    with pytest.raises(ValueError, match=r"\[2\]"):
        combine({0: np.ones(2), 1: np.ones(2)}, [0.4, 0.3, 0.3])


def test_exchange_oracle_and_plain_inboxes_match(small, rng):
    top, w = small
    n, L = top.n_agents, 4
    phi, omega = rng.standard_normal((n, L)), rng.standard_normal((n, L))
    u, d = rng.standard_normal((n, L)), rng.standard_normal(n)
    P = network_update_directions(omega, u, d, w.c)
    params = GainParams()
    spec = AlgorithmSpec("o", "dp-pgcdlms", "oracle", 1.0)
    gains = np.array([adapt(omega[k], P[k], spec, 1.0, params)[1].diag for k in range(n)])
    box_o = exchange(phi, gains, P, omega, u, d, 3, top, w, spec, QUIET, params)
    box_n = exchange(phi, gains, P, omega, u, d, 3, top, w, AlgorithmSpec("p", "pgcdlms"), QUIET, params)
    for k in range(n):
        assert box_o[k].keys() == top.neighborhoods[k]
        for l in top.neighborhoods[k]:
            np.testing.assert_allclose(box_o[k][l], phi[l], rtol=1e-10)
            np.testing.assert_array_equal(box_n[k][l], phi[l])


def test_exchange_noisy_channel_needs_rng(small, rng):
    top, w = small
    n = top.n_agents
    z = np.zeros((n, 3))
    with pytest.raises(ValueError, match="rng"):
        exchange(z, np.ones((n, 3)), z, z, z, np.zeros(n), 0, top, w, AlgorithmSpec("d"), PrivacyConfig(), GainParams())


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_engine_matches_reference_operations(spec, small):
    top, w = small
    sc = _scenario(top.n_agents, 8, seed=4)
    privacy = QUIET
    ref = _reference_run(spec, sc, top, w, privacy, GainParams())
    log = run(spec, sc, top, w, privacy, GainParams(), Collect(estimates=True))
    np.testing.assert_allclose(log.estimates[0], ref, rtol=1e-10, atol=1e-12)


def test_horizon_one(small):
    top, w = small
    sc = _scenario(top.n_agents, 1, seed=8)
    spec = SPECS[4]
    ref = _reference_run(spec, sc, top, w, QUIET, GainParams())
    log = run(spec, sc, top, w, QUIET, GainParams())
    np.testing.assert_allclose(log.final_estimates[0], ref[0], rtol=1e-12)
    assert log.sq_dev.shape == (1, 1)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_runs_are_bit_identical(spec, small):
    top, w = small
    privacy = PrivacyConfig()
    a = run(spec, _scenario(top.n_agents, 40, seed=2), top, w, privacy, GainParams())
    b = run(spec, _scenario(top.n_agents, 40, seed=2), top, w, privacy, GainParams())
    assert np.array_equal(a.sq_dev, b.sq_dev)
    assert np.array_equal(a.final_estimates, b.final_estimates)


def test_batch_equals_individual_runs(small):
    top, w = small
    scs = [_scenario(top.n_agents, 30, seed=s) for s in range(3)]
    spec = SPECS[3]
    privacy = PrivacyConfig()
    batch = simulate(spec, scs, top, w, privacy, GainParams(), shared_seeds=[5, 6, 7], chunk=7)
    for r, sc in enumerate(scs):
        one = simulate(spec, [sc], top, w, privacy, GainParams(), shared_seeds=[5 + r], chunk=30)
        np.testing.assert_allclose(batch.sq_dev[r], one.sq_dev[0], rtol=1e-12)


def test_oracle_reproduces_pgcdlms(small):
    top, w = small
    sc = _scenario(top.n_agents, 300, seed=1)
    collect = Collect(estimates=True)
    pg = run(AlgorithmSpec("pg", "pgcdlms", None, 0.3), sc, top, w, QUIET, GainParams(), collect)
    oc = run(AlgorithmSpec("oc", "dp-pgcdlms", "oracle", 0.3), sc, top, w, QUIET, GainParams(), collect)
    np.testing.assert_allclose(oc.estimates, pg.estimates, rtol=1e-9, atol=1e-12)


def test_noiseless_v2_reproduces_pgcdlms(small):
    top, w = small
    sc = _scenario(top.n_agents, 200, seed=1)
    silent = PrivacyConfig(dp_noise_variance=0.0, channel_noise_variance=0.0)
    collect = Collect(estimates=True)
    pg = run(AlgorithmSpec("pg", "pgcdlms", None, 0.1), sc, top, w, silent, GainParams(), collect)
    v2 = run(AlgorithmSpec("v2", "dp-pgcdlms", "v2", 0.1), sc, top, w, silent, GainParams(), collect)
    np.testing.assert_allclose(v2.estimates, pg.estimates, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_only_neighbors_matter(spec, net16, rng):
    top, w = net16
    n, L = top.n_agents, 4
    k = 0
    outsider = next(j for j in range(n) if j not in top.neighborhoods[k])
    u, d = rng.standard_normal((1, n, L)), rng.standard_normal((1, n))
    w0 = rng.standard_normal((1, n, L))
    w1 = w0.copy()
    w1[0, outsider] += 5.0
    outs = [
        propagate(spec, [ArraySource(u, d)], top, w, QUIET, GainParams(), horizon=1, dim=L, noise_seeds=[0], initial=x)
        for x in (w0, w1)
    ]
    np.testing.assert_array_equal(outs[0].final_estimates[0, k], outs[1].final_estimates[0, k])
    assert not np.array_equal(outs[0].final_estimates, outs[1].final_estimates)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_truth_is_a_fixed_point(spec, small):
    top, w = small
    sc = _scenario(top.n_agents, 20, seed=6, measurement_noise_variance=1e-300)
    L = sc.dim
    silent = PrivacyConfig(dp_noise_variance=0.0, channel_noise_variance=0.0)
    start = np.broadcast_to(sc.omega_at(0), (1, top.n_agents, L))
    log = propagate(spec, [sc.streams()], top, w, silent, GainParams(), horizon=20, dim=L, noise_seeds=[0],
                    initial=start, collect=Collect(estimates=True))
    np.testing.assert_allclose(log.estimates[0], np.broadcast_to(start, (20, top.n_agents, L)), rtol=0, atol=1e-12)


def test_dlms_converges_deeply():
    # zero channel noise isolates adaptation; 16 nodes, L = 20, mu = 0.01
    top = build_topology(TopologySpec(n_agents=16, seed=7))
    w = uniform_weights(top)
    scs = [generate_scenario(ScenarioConfig(horizon=1000, master_seed=s)) for s in range(5)]
    silent = PrivacyConfig(dp_noise_variance=0.0, channel_noise_variance=0.0)
    log = simulate(AlgorithmSpec("dlms", "dlms", None, 0.01), scs, top, w, silent, GainParams())
    msd = 10 * np.log10(log.sq_dev.mean(axis=0))
    smoothed = 10 * np.log10(log.sq_dev.mean(axis=0)[880:921].mean())
    assert smoothed <= msd[0] - 25


def test_privacy_ordering_without_channel_noise(net16):
    top, w = net16
    scs = [generate_scenario(ScenarioConfig(horizon=800, master_seed=100 + s)) for s in range(20)]
    params = GainParams()
    final = {}
    for spec in (
        AlgorithmSpec("plain", "pgcdlms", None, 0.1),
        AlgorithmSpec("oracle", "dp-pgcdlms", "oracle", 0.1),
        AlgorithmSpec("v2", "dp-pgcdlms", "v2", 0.1),
        AlgorithmSpec("v1", "dp-pgcdlms", "v1", 0.1),
    ):
        log = simulate(spec, scs, top, w, QUIET, params)
        final[spec.name] = 10 * np.log10(log.sq_dev[:, -200:].mean())
    order = [final[k] for k in ("plain", "oracle", "v2", "v1")]
    assert all(b >= a - 1.0 for a, b in zip(order, order[1:]))


def test_collectors(small):
    top, w = small
    sc = _scenario(top.n_agents, 25, seed=3)
    spec = AlgorithmSpec("v1", "dp-pgcdlms", "v1", 0.1)
    log = run(spec, sc, top, w, PrivacyConfig(), GainParams(),
              Collect(bounds=True, diagnostics=True, diag_stride=5, adversary=True))
    E = len(top.links())
    assert log.d2.shape == log.d2_max.shape == (1, 25, top.n_agents)
    assert log.key_error.shape == (1, 5, E, 4)
    assert list(log.diag_iterations) == [0, 5, 10, 15, 20]
    assert set(log.adversary) == {"honest", "none", "noise-only", "key-only"}
    assert log.run(0).d2.shape == (1, 25, top.n_agents)


def test_data_shape_mismatch(small):
    top, w = small
    u, d = np.zeros((3, top.n_agents + 1, 2)), np.zeros((3, top.n_agents + 1))
    with pytest.raises(SimulationError, match="iteration 0: .*shape"):
        propagate(SPECS[0], [ArraySource(u, d)], top, w, QUIET, GainParams(), horizon=3, dim=2, noise_seeds=[0])
