import numpy as np
import pytest

from e2eoffload.radio import RadioEnvironment
from e2eoffload.scenario import ScenarioConfig, TaskClass, generate_instance
from e2eoffload.transport import Link, Node, Topology

NOISE = 2e-11  # -150 dBm/Hz over 20 MHz
BW = 20e6


def make_env(gain, pmax=0.5, fronthaul=1e12, serving=None):
    gain = np.atleast_2d(np.asarray(gain, dtype=float))
    k = gain.shape[0]
    serving = np.zeros(k, dtype=int) if serving is None else np.asarray(serving)
    n_rrh = int(serving.max()) + 1
    return RadioEnvironment(serving, gain, NOISE, BW, np.full(n_rrh, float(fronthaul)),
                            np.full(k, float(pmax)))


def two_node_topology(capacity=1e9, latency=0.01, link_capacity=0.4e9):
    nodes = (Node(0, capacity, 1e-28, True), Node(1, capacity, 1e-28))
    return Topology(nodes, (Link(0, 1, link_capacity, latency),))


@pytest.fixture(scope="session")
def small_instance():
    cfg = ScenarioConfig(task_classes=(TaskClass(8, max_latency=0.03),))
    return generate_instance(cfg, 3)
