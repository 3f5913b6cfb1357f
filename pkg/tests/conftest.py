from __future__ import annotations

import functools
from pathlib import Path

import numpy as np
import pytest

from triflow.ingest import parse_native
from triflow.pfsolver import solve_newton

DATA = Path(__file__).resolve().parents[1] / "src" / "triflow" / "data"
MALFORMED = Path(__file__).resolve().parent / "data" / "malformed"

FIXTURES = ("case2_bal", "case3_unbal", "case4_lateral", "case3_mesh", "noload")
RADIAL = ("case2_bal", "case3_unbal", "case4_lateral", "noload")


def fixture_path(name: str) -> Path:
    return DATA / f"{name}.net"


@functools.lru_cache(maxsize=None)
def load(name: str):
    return parse_native(fixture_path(name).read_text())


@functools.lru_cache(maxsize=None)
def solved(name: str):
    """(network, IVState) for a fixture; cached, do not mutate."""
    net = load(name)
    state, trace = solve_newton(net)
    assert trace.converged
    return net, state


@pytest.fixture(params=FIXTURES)
def fixture_name(request):
    return request.param


@pytest.fixture(params=RADIAL)
def radial_name(request):
    return request.param


def balanced(mag: float = 1.0, shift_deg: float = 0.0) -> np.ndarray:
    a = np.radians(shift_deg)
    return mag * np.exp(1j * (a + np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3])))
