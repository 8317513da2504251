"""Shared fixtures: the reference geometry and its two standard channels."""

import numpy as np
import pytest

from mcderiv.channel import Topology, channel_vector, grid_from_rate


@pytest.fixture(scope="session")
def topo():
    return Topology(radius_rx=5.0, distance_tx=15.0, diffusion=100.0)


@pytest.fixture(scope="session")
def slow_channel(topo):
    """Half-peak-time symbols (lighter ISI), N=5, memory 10."""
    return channel_vector(topo, grid_from_rate(topo, 0.5, 5, 10))


@pytest.fixture(scope="session")
def fast_channel(topo):
    """Quarter-peak-time symbols (heavier ISI), N=5, memory 10."""
    return channel_vector(topo, grid_from_rate(topo, 0.25, 5, 10))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
