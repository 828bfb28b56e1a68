"""Double-private proportionate diffusion LMS simulation toolkit."""

from .diffusion import AlgorithmSpec, Collect, RunLog, run, simulate
from .gain import DiagonalGain, GainParams, gain_matrix, lambda_star, proportionate_gain
from .privacy import PrivacyConfig
from .signal import Scenario, ScenarioConfig, generate_scenario
from .topology import Topology, TopologySpec, build_topology, uniform_weights

__version__ = "0.1.0"

__all__ = [
    "AlgorithmSpec",
    "Collect",
    "DiagonalGain",
    "GainParams",
    "PrivacyConfig",
    "RunLog",
    "Scenario",
    "ScenarioConfig",
    "Topology",
    "TopologySpec",
    "build_topology",
    "gain_matrix",
    "generate_scenario",
    "lambda_star",
    "proportionate_gain",
    "run",
    "simulate",
    "uniform_weights",
]
