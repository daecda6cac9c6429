from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from brachia.bench import get_scenario
from brachia.extremal import ExtremalPoint
from brachia.system import ControlAffineSystem

FIXTURES = Path(__file__).parent / "fixtures"

HEIS_F1 = ["1", "0", "-x2/2"]
HEIS_F2 = ["0", "1", "x1/2"]


def make_slab() -> ControlAffineSystem:
    return ControlAffineSystem.from_strings(["0", "0", "1+x1"], [["1", "0", "0"], ["0", "1", "0"]])


def make_heis(drift=("0", "0", "1-2*x1")) -> ControlAffineSystem:
    return ControlAffineSystem.from_strings(list(drift), [HEIS_F1, HEIS_F2])


def make_dint() -> ControlAffineSystem:
    return ControlAffineSystem.from_strings(["x2", "0"], [["0", "1"]])


@pytest.fixture
def slab():
    return make_slab()


@pytest.fixture
def heis():
    return make_heis()


@pytest.fixture
def dint():
    return make_dint()


@pytest.fixture
def lam0():
    return ExtremalPoint(np.zeros(3), np.array([0.0, 0.0, 1.0]))


@pytest.fixture
def slab3():
    return get_scenario("slab3")


@pytest.fixture
def heis3():
    return get_scenario("heis3")


@pytest.fixture
def dint2():
    return get_scenario("dint2")


@pytest.fixture
def open3():
    return get_scenario("open3")
