import json
from pathlib import Path

import numpy as np
import pytest

from fmsync import AgentParams, default_topology_6, rotational_carrier

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture(scope="session")
def example1_config() -> dict:
    with open(CONFIG_DIR / "example1.json") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def example1_agent() -> AgentParams:
    return AgentParams(S=np.array([[0.0, 0.1], [-0.1, 0.0]]),
                       B=np.array([1.0, 1.0]),
                       E=np.array([4.5, 0.0]),
                       omega_c=3.0)


@pytest.fixture(scope="session")
def topology6():
    return default_topology_6()


@pytest.fixture(scope="session")
def rot_carrier():
    return rotational_carrier()
