import numpy as np
import pytest

from mobal.conjecture import ConjectureSpace
from mobal.netsys import NetSysConfig, build_model
from mobal.pomdp import PomdpModel


@pytest.fixture(scope="session")
def netsys1():
    return build_model(NetSysConfig(), 0.2)


@pytest.fixture(scope="session")
def netsys2():
    return build_model(NetSysConfig(n_components=2), 0.2)


@pytest.fixture(scope="session")
def space3():
    cfg = NetSysConfig()
    return ConjectureSpace.from_builder([0.0, 0.5, 1.0], lambda p: build_model(cfg, p))


@pytest.fixture
def toy():
    # two states, two actions, three observations
    T = np.array([[[0.9, 0.1], [0.2, 0.8]], [[1.0, 0.0], [1.0, 0.0]]])
    Z = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
    C = np.array([[0.0, 1.0], [2.0, 1.0]])
    return PomdpModel(T, Z, C, 0.9)
