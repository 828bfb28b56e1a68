"""Monte-Carlo experiments, MSD aggregation, presets and CSV output."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ._random import derive_seed
from .analysis import (
    BoundReport,
    DiagnosticsReport,
    StabilityProbe,
    StabilityReport,
    assumption_diagnostics,
    bound_satisfied,
    mean_stability_probe,
    stepsize_bound,
)
from .diffusion import AlgorithmSpec, Collect, simulate
from .gain import GainParams
from .privacy import PrivacyConfig
from .signal import ScenarioConfig, generate_scenario
from .topology import TopologySpec, build_topology, uniform_weights

logger = logging.getLogger(__name__)

MSD_FLOOR_DB = -200.0
PRESETS = ("fig1", "fig2", "bound-check", "stability-probe", "diagnostics")

TRACE_HEADER = ("algorithm", "iteration", "msd_db")
BOUND_HEADER = ("algorithm", "iteration", "node", "d2", "d2_max", "satisfied")
DIAGNOSTICS_HEADER = ("algorithm", "run", "r_ab", "r_cd", "mean_v")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    scenario: ScenarioConfig = ScenarioConfig()
    topology: TopologySpec = TopologySpec()
    gain: GainParams = GainParams()
    privacy: PrivacyConfig = PrivacyConfig()
    algorithms: tuple[AlgorithmSpec, ...] = ()
    monte_carlo_runs: int = 50
    master_seed: int = 0
    batch_size: int = 50
    collect_bounds: bool = False
    collect_diagnostics: bool = False
    diag_stride: int = 10
    diag_burn_in: int = 0
    mu_grid: tuple[float, ...] = (0.05, 0.5, 1.0, 3.0)
    probe_horizon: int = 200
    probe_seeds: int = 20

    def validate(self) -> list[str]:
        """All problems at once; empty when the config is usable."""
        errors = []
        if not self.algorithms:
            errors.append("at least one algorithm is required")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            errors.append(f"algorithm names must be unique, got {names}")
        if self.scenario.horizon < 1:
            errors.append(f"scenario.horizon must be >= 1, got {self.scenario.horizon}")
        if self.scenario.n_agents != self.topology.n_agents:
            errors.append(
                f"scenario.n_agents ({self.scenario.n_agents}) differs from topology.n_agents ({self.topology.n_agents})"
            )
        for name in ("monte_carlo_runs", "batch_size", "diag_stride", "probe_horizon", "probe_seeds"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if any(m <= 0 for m in self.mu_grid):
            errors.append(f"mu_grid entries must be positive, got {self.mu_grid}")
        return errors


@dataclass
class MsdTrace:
    """Run-averaged network MSD of one algorithm."""

    algorithm: str
    sq_dev: np.ndarray  # (T,), mean over runs in the linear domain
    per_run: np.ndarray  # (runs, T)

    @property
    def msd_db(self) -> np.ndarray:
        return to_db(self.sq_dev)

    def __len__(self):
        return len(self.sq_dev)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def to_db(sq, floor_db: float = MSD_FLOOR_DB):
    sq = np.asarray(sq, dtype=float)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(sq)
    return np.maximum(db, floor_db)


def network_msd(states, omega_true, floor_db: float = MSD_FLOOR_DB) -> float:
    """``10 log10(mean_k ||w_k - w_o||^2)`` for node estimates (N, L)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] == 0:
        raise ValueError("network has no nodes")
    sq = np.mean(np.sum((states - np.asarray(omega_true, dtype=float)) ** 2, axis=-1))
    return float(to_db(sq, floor_db))


def run_seed(master_seed: int, run: int) -> int:
    return derive_seed(master_seed, "run", run)


def run_scenarios(config: ExperimentConfig, runs: range):
    return [generate_scenario(replace(config.scenario, master_seed=run_seed(config.master_seed, r))) for r in runs]


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Every algorithm on ``monte_carlo_runs`` independent runs.

    Run ``r`` draws its truth, data and channel noise from
    ``derive_seed(master_seed, "run", r)`` and its DP noise from
    ``derive_seed(shared_seed, "run", r)``; all algorithms see the same
    draws, and adding runs never changes earlier ones.
    """
    errors = config.validate()
    if errors:
        raise ValueError("; ".join(errors))
    topology = build_topology(config.topology)
    weights = uniform_weights(topology)
    collect = Collect(
        bounds=config.collect_bounds,
        diagnostics=config.collect_diagnostics,
        diag_stride=config.diag_stride,
        diag_burn_in=config.diag_burn_in,
    )
    result = ExperimentResult(config)
    R = config.monte_carlo_runs
    batches = [range(s, min(s + config.batch_size, R)) for s in range(0, R, config.batch_size)]
    for spec in config.algorithms:
        privacy = replace(config.privacy, variant=spec.variant if spec.private else "none")
        sq, d2, d2_max, diags = [], [], [], []
        for runs in batches:
            scenarios = run_scenarios(config, runs)
            shared = [derive_seed(privacy.shared_seed, "run", r) for r in runs]
            log = simulate(spec, scenarios, topology, weights, privacy, config.gain, shared, collect)
            sq.append(log.sq_dev)
            if collect.bounds:
                d2.append(log.d2)
                d2_max.append(log.d2_max)
            if collect.diagnostics and spec.private:
                diags.extend(assumption_diagnostics(log))
        per_run = np.concatenate(sq)
        result.traces[spec.name] = MsdTrace(spec.name, per_run.mean(axis=0), per_run)
        if collect.bounds:
            d2, d2_max = np.concatenate(d2), np.concatenate(d2_max)
            result.bounds[spec.name] = BoundReport(d2, d2_max, bound_satisfied(d2, d2_max))
        if diags:
            result.diagnostics[spec.name] = diags
        logger.info("%s: final MSD %.2f dB", spec.name, result.traces[spec.name].msd_db[-1])
    return result


def run_stability(config: ExperimentConfig) -> tuple[StabilityReport, StabilityProbe]:
    """Analytic step-size condition for the white-regressor model plus the
    empirical divergence map for the first algorithm."""
    topology = build_topology(config.topology)
    weights = uniform_weights(topology)
    L = config.scenario.dim
    spec = config.algorithms[0] if config.algorithms else AlgorithmSpec("dlms")
    report = stepsize_bound(
        topology, weights, config.scenario.regressor_variance * np.eye(L), spec.step_sizes(topology.n_agents)
    )
    probe = mean_stability_probe(
        spec,
        topology,
        weights,
        mu_grid=config.mu_grid,
        seeds=config.probe_seeds,
        horizon=config.probe_horizon,
        dim=L,
        regressor_variance=config.scenario.regressor_variance,
        measurement_noise_variance=config.scenario.measurement_noise_variance,
        privacy=replace(config.privacy, variant=spec.variant if spec.private else "none"),
        params=config.gain,
        master_seed=config.master_seed,
    )
    return report, probe


# -- CSV ---------------------------------------------------------------------


def _fmt(x) -> str:
    return "%.17g" % x


def traces_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for name, trace in result.traces.items():
        for i, v in enumerate(trace.msd_db):
            w.writerow((name, i, _fmt(v)))
    return buf.getvalue()


def bounds_csv(result: ExperimentResult) -> str:
    """One row per (algorithm, iteration, node): run-means of ``d2`` and
    ``d2_max``, and whether the bound held in every run."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUND_HEADER)
    for name, rep in result.bounds.items():
        d2, d2_max, ok = rep.d2.mean(axis=0), rep.d2_max.mean(axis=0), rep.satisfied.all(axis=0)
        T, N = d2.shape
        for i in range(T):
            for k in range(N):
                w.writerow((name, i, k, _fmt(d2[i, k]), _fmt(d2_max[i, k]), "true" if ok[i, k] else "false"))
    return buf.getvalue()


def diagnostics_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAGNOSTICS_HEADER)
    for name, reports in result.diagnostics.items():
        for r, rep in enumerate(reports):
            w.writerow((name, r, _fmt(rep.r_ab), _fmt(rep.r_cd), _fmt(rep.mean_v)))
    return buf.getvalue()


def pooled_diagnostics(reports: list[DiagnosticsReport]) -> DiagnosticsReport:
    """Sample-weighted average of per-run reports."""
    n = np.array([r.n_samples for r in reports], dtype=float)
    avg = lambda key: float(np.sum(n * [getattr(r, key) for r in reports]) / n.sum())  # noqa: E731
    return DiagnosticsReport(avg("r_ab"), avg("r_cd"), avg("mean_v"), int(n.sum()))


def write_text(path, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


# -- presets -----------------------------------------------------------------


FIG1_ALGORITHMS = (
    AlgorithmSpec("oracle", "dp-pgcdlms", "oracle", 1.0),
    AlgorithmSpec("v1", "dp-pgcdlms", "v1", 0.1),
    AlgorithmSpec("v2", "dp-pgcdlms", "v2", 0.1),
    AlgorithmSpec("pgcdlms", "pgcdlms", None, 0.05),
    AlgorithmSpec("dlms", "dlms", None, 0.01),
)


def preset(name: str) -> ExperimentConfig:
    base = ExperimentConfig(
        name=name,
        scenario=ScenarioConfig(dim=20, n_agents=16, regressor_variance=1.0, measurement_noise_variance=0.05, horizon=2000),
        topology=TopologySpec(kind="random-geometric", n_agents=16, seed=7),
        gain=GainParams(alpha=1.5, beta=10.0),
        privacy=PrivacyConfig(dp_noise_variance=0.05, channel_noise_variance=0.05, shared_seed=12345),
        monte_carlo_runs=50,
    )
    if name == "fig1":
        return replace(base, scenario=replace(base.scenario, change_points=(1000,)), algorithms=FIG1_ALGORITHMS)
    if name == "fig2":
        return replace(base, algorithms=FIG1_ALGORITHMS[1:])
    if name == "bound-check":
        algs = tuple(replace(a, normalize_phi=True) for a in FIG1_ALGORITHMS[:3])
        return replace(
            base,
            scenario=replace(base.scenario, horizon=500),
            privacy=replace(base.privacy, channel_noise_variance=0.0),
            algorithms=algs,
            monte_carlo_runs=20,
            collect_bounds=True,
        )
    if name == "stability-probe":
        return replace(
            base,
            privacy=replace(base.privacy, channel_noise_variance=0.0),
            algorithms=(AlgorithmSpec("dlms", "dlms", None, 0.05),),
            monte_carlo_runs=20,
            mu_grid=(0.05, 0.5, 1.0, 3.0),
        )
    if name == "diagnostics":
        return replace(
            base,
            algorithms=(FIG1_ALGORITHMS[1],),
            monte_carlo_runs=10,
            collect_diagnostics=True,
            diag_stride=10,
        )
    raise KeyError(f"unknown preset {name!r}; expected one of {PRESETS}")
