import numpy as np
import pytest

from dpdlms import build_topology, uniform_weights
from dpdlms.topology import TopologySpec


@pytest.fixture(scope="session")
def net16():
    top = build_topology(TopologySpec(kind="random-geometric", n_agents=16, seed=7))
    return top, uniform_weights(top)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(mod.RESULTS, key=lambda k: int(k[1:])):
            terminalreporter.write_line(mod.RESULTS[key])
