"""Ground truth, regressors and measurements for the linear data model
``d = u^T w_o + v`` observed at every node."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._random import BlockStream, stream_rows


@dataclass(frozen=True)
class ScenarioConfig:
    dim: int = 20
    n_agents: int = 16
    regressor_variance: float = 1.0
    measurement_noise_variance: float = 0.05
    horizon: int = 2000
    change_points: tuple[int, ...] = ()
    master_seed: int = 0


@dataclass(frozen=True)
class MeasurementBatch:
    iteration: int
    regressors: np.ndarray  # (N, L)
    measurements: np.ndarray  # (N,)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Piecewise-constant truth plus per-node data streams.

    Streams are keyed by ``(master_seed, tag, node)``; row ``i`` of a node's
    stream is that node's draw at iteration ``i``.
    """

    dim: int
    n_agents: int
    starts: tuple[int, ...]
    values: np.ndarray = field(repr=False)  # (segments, L)
    regressor_variance: float
    measurement_noise_variance: float
    horizon: int
    master_seed: int

    def omega_at(self, i: int) -> np.ndarray:
        seg = int(np.searchsorted(self.starts, i, side="right")) - 1
        return self.values[seg]

    def omega_path(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Truth for iterations ``start..stop-1``, shape (n, L)."""
        stop = self.horizon if stop is None else stop
        seg = np.searchsorted(self.starts, np.arange(start, stop), side="right") - 1
        return self.values[seg]

    def streams(self) -> "MeasurementStreams":
        return MeasurementStreams(self)

    @cached_property
    def _data(self):
        streams = self.streams()
        return streams.take(self.horizon)


class MeasurementStreams:
    """Sequential chunked reader over a scenario's data streams."""

    def __init__(self, scenario: Scenario):
        s = scenario
        self.scenario = s
        self._u = [BlockStream(s.master_seed, "regressor", k, row_shape=(s.dim,)) for k in range(s.n_agents)]
        self._v = [BlockStream(s.master_seed, "measurement-noise", k) for k in range(s.n_agents)]
        self.position = 0

    def take(self, n: int):
        """Next ``n`` iterations: regressors (n, N, L) and measurements (n, N)."""
        s = self.scenario
        u = np.stack([st.take(n) for st in self._u], axis=1) * np.sqrt(s.regressor_variance)
        v = np.stack([st.take(n) for st in self._v], axis=1) * np.sqrt(s.measurement_noise_variance)
        omega = s.omega_path(self.position, self.position + n)
        d = np.einsum("tkj,tj->tk", u, omega) + v
        self.position += n
        return u, d


def generate_scenario(config: ScenarioConfig) -> Scenario:
    if config.dim < 1:
        raise ValueError(f"dim must be >= 1, got {config.dim}")
    if config.n_agents < 1:
        raise ValueError(f"n_agents must be >= 1, got {config.n_agents}")
    if config.horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {config.horizon}")
    for name in ("regressor_variance", "measurement_noise_variance"):
        if not getattr(config, name) > 0:
            raise ValueError(f"{name} must be positive, got {getattr(config, name)}")
    starts = (0,) + tuple(int(c) for c in config.change_points if c != 0)
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise ValueError(f"change points must be strictly increasing, got {config.change_points}")
    values = np.stack(
        [stream_rows(config.master_seed, "omega", j, n_rows=1, row_shape=(config.dim,))[0] for j in range(len(starts))]
    )
    return Scenario(
        dim=config.dim,
        n_agents=config.n_agents,
        starts=starts,
        values=values,
        regressor_variance=config.regressor_variance,
        measurement_noise_variance=config.measurement_noise_variance,
        horizon=config.horizon,
        master_seed=config.master_seed,
    )


def emit_measurements(scenario: Scenario, i: int) -> MeasurementBatch:
    if not 0 <= i < scenario.horizon:
        raise IndexError(f"iteration {i} outside horizon [0, {scenario.horizon})")
    u, d = scenario._data
    return MeasurementBatch(iteration=i, regressors=u[i].copy(), measurements=d[i].copy())
