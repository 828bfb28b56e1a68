from dataclasses import replace

import numpy as np
import pytest

from dpdlms import harness
from dpdlms._random import derive_seed
from dpdlms.diffusion import run
from dpdlms.harness import (
    BOUND_HEADER,
    DIAGNOSTICS_HEADER,
    TRACE_HEADER,
    ExperimentConfig,
    network_msd,
    preset,
    run_experiment,
    run_scenarios,
    to_db,
)
from dpdlms.topology import build_topology, uniform_weights


def small(name="fig1", runs=3, horizon=60, **kw):
    cfg = preset(name)
    return replace(cfg, scenario=replace(cfg.scenario, horizon=horizon, change_points=()), monte_carlo_runs=runs, **kw)


def test_network_msd_examples():
    assert network_msd(np.full((4, 1), 0.1), [0.0]) == pytest.approx(-20.0)
    states = np.array([[0.1, 0.1], [0.1, 0.1]])
    assert network_msd(states, [0.0, 0.0]) == pytest.approx(-16.989700043360187, abs=1e-12)
    assert network_msd(np.zeros((3, 2)), np.zeros(2)) == -200.0
    with pytest.raises(ValueError, match="no nodes"):
        network_msd(np.zeros((0, 2)), np.zeros(2))


def test_linear_domain_averaging():
    # runs at 0 dB and -40 dB average to about -3 dB, not -20 dB
    sq = np.array([[1.0], [1e-4]])
    assert to_db(sq.mean(axis=0))[0] == pytest.approx(10 * np.log10(0.50005))
    assert to_db(sq.mean(axis=0))[0] > -4


def test_single_run_matches_direct_call():
    cfg = small(runs=1)
    res = run_experiment(cfg)
    top = build_topology(cfg.topology)
    sc = run_scenarios(cfg, range(1))[0]
    for spec in cfg.algorithms:
        privacy = replace(cfg.privacy, variant=spec.variant if spec.private else "none")
        log = run(spec, sc, top, uniform_weights(top), privacy, cfg.gain,
                  shared_seed=derive_seed(cfg.privacy.shared_seed, "run", 0))
        np.testing.assert_array_equal(res.traces[spec.name].per_run[0], log.sq_dev[0])


def test_adding_runs_keeps_earlier_runs():
    a = run_experiment(small(runs=2))
    b = run_experiment(small(runs=4, batch_size=3))
    for name in a.traces:
        np.testing.assert_array_equal(a.traces[name].per_run, b.traces[name].per_run[:2])


def test_csv_bytes_are_reproducible():
    cfg = small(runs=2, collect_bounds=True)
    one, two = run_experiment(cfg), run_experiment(cfg)
    assert harness.traces_csv(one) == harness.traces_csv(two)
    assert harness.bounds_csv(one) == harness.bounds_csv(two)


def test_csv_schemas():
    cfg = small(runs=2, horizon=30, collect_bounds=True)
    res = run_experiment(cfg)
    traces = harness.traces_csv(res).splitlines()
    assert traces[0] == ",".join(TRACE_HEADER)
    assert len(traces) == 1 + 5 * 30
    assert traces[1].startswith("oracle,0,")
    bounds = harness.bounds_csv(res).splitlines()
    assert bounds[0] == ",".join(BOUND_HEADER)
    assert len(bounds) == 1 + 5 * 30 * 16
    assert {r.split(",")[-1] for r in bounds[1:]} <= {"true", "false"}

    diag = run_experiment(small("diagnostics", runs=2, horizon=120))
    rows = harness.diagnostics_csv(diag).splitlines()
    assert rows[0] == ",".join(DIAGNOSTICS_HEADER)
    assert [r.split(",")[:2] for r in rows[1:]] == [["v1", "0"], ["v1", "1"]]


def test_msd_trace_is_linear_mean():
    res = run_experiment(small(runs=3, horizon=20))
    t = res.traces["dlms"]
    np.testing.assert_allclose(t.sq_dev, t.per_run.mean(axis=0))
    assert len(t) == 20 and t.msd_db[0] == pytest.approx(10 * np.log10(t.sq_dev[0]))


def test_validation_collects_all_errors():
    cfg = replace(ExperimentConfig(), monte_carlo_runs=0, batch_size=0, mu_grid=(-1.0,))
    errors = cfg.validate()
    assert len(errors) == 4
    with pytest.raises(ValueError, match="algorithm"):
        run_experiment(cfg)


def test_presets():
    fig1 = preset("fig1")
    assert fig1.scenario.change_points == (1000,) and fig1.scenario.horizon == 2000
    steps = {a.name: a.step_size for a in fig1.algorithms}
    assert steps == {"oracle": 1.0, "v1": 0.1, "v2": 0.1, "pgcdlms": 0.05, "dlms": 0.01}
    assert (fig1.scenario.dim, fig1.topology.n_agents, fig1.monte_carlo_runs) == (20, 16, 50)
    assert fig1.privacy.dp_noise_variance == fig1.privacy.channel_noise_variance == 0.05

    bc = preset("bound-check")
    assert bc.privacy.channel_noise_variance == 0.0
    assert all(a.normalize_phi and a.private for a in bc.algorithms)

    probe = preset("stability-probe")
    assert min(probe.mu_grid) < 2.0 < max(probe.mu_grid)
    assert [a.name for a in preset("fig2").algorithms] == ["v1", "v2", "pgcdlms", "dlms"]
    assert preset("diagnostics").collect_diagnostics
    for name in harness.PRESETS:
        assert preset(name).validate() == []
    with pytest.raises(KeyError, match="unknown preset"):
        preset("fig3")


def test_write_text_reports_path(tmp_path):
    target = tmp_path / "missing" / "x.csv"
    with pytest.raises(OSError, match="missing"):
        harness.write_text(target, "a\n")
