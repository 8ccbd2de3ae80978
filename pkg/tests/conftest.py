from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "dnoport" / "data"
CONFIGS = ROOT / "configs"
FROZEN = Path(__file__).resolve().parent / "data"

sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def desk_inst():
    from dnoport.harness import load_instance

    return load_instance(DATA / "desk12.txt")


@pytest.fixture(scope="session")
def desk_cs():
    from dnoport.instances import make_constraints

    return make_constraints(12, K=3, eps=0.05, ups=0.8, tau=0.05)


@pytest.fixture(scope="session")
def desk_enum(desk_inst, desk_cs):
    from dnoport.oracle import enumerate_front, lambda_grid

    return enumerate_front(desk_inst, desk_cs, lambda_grid(101))


@pytest.fixture(scope="session")
def desk_eps(desk_inst, desk_cs):
    from dnoport.oracle import epsilon_constraint_front

    return epsilon_constraint_front(desk_inst, desk_cs, 100)


def frozen_front(name: str) -> np.ndarray:
    return np.loadtxt(FROZEN / name, delimiter=",", skiprows=1).reshape(-1, 2)


@pytest.fixture(params=["python", "cython"])
def backend(request):
    from dnoport import subsolver

    if request.param not in subsolver.available_backends():
        pytest.skip("compiled kernel not built")
    with subsolver.use_backend(request.param):
        yield request.param
