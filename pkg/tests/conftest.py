"""Shared fixtures for the slpnet test suite."""

import numpy as np
import pytest

from slpnet.constellation import make_constellation
from slpnet.maxmin import SolveConfig
from slpnet.network import ConvSpec, NetworkSpec


@pytest.fixture
def qpsk():
    """QPSK constellation (M = 4, offset 0)."""
    return make_constellation(4)


@pytest.fixture
def psk8():
    """8-PSK constellation."""
    return make_constellation(8)


@pytest.fixture
def rng():
    """Deterministic generator for ad-hoc draws inside a test."""
    return np.random.default_rng(0xC0FFEE)


@pytest.fixture
def solve_cfg():
    """Default solver configuration."""
    return SolveConfig()


@pytest.fixture
def tiny_spec():
    """Reduced-width EPNN spec (K=2, N_t=2, QPSK) for fast network tests."""
    return NetworkSpec(
        users=2,
        antennas=2,
        order=4,
        power_budget=1.0,
        conv_layers=(ConvSpec(4, (2, 1), (2, 1)), ConvSpec(4, (1, 1), (1, 1))),
        branch_widths=(8, 16, 8, 16, 8),
        num_branches=2,
        trunk_width=8,
    )


def complex_normal(rng, shape, scale=1.0):
    """i.i.d. CN(0, scale**2) array."""
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
