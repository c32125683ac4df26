from importlib import resources

import numpy as np
import pytest

from nepj_admm.functions import Quadratic
from nepj_admm.io import load_problem
from nepj_admm.problem import Problem

SHIPPED = ("qp2", "lasso3", "toy_nonconvex")


def data_path(name):
    return resources.files("nepj_admm") / "data" / f"{name}.json"


def shipped(name):
    return load_problem(data_path(name))


@pytest.fixture
def qp2():
    return shipped("qp2")


@pytest.fixture
def toy():
    return shipped("toy_nonconvex")


@pytest.fixture
def lasso3():
    return shipped("lasso3")


def scalar_qp():
    """f1 = x^2/2, f2 = (x-3)^2/2, x1 + x2 = 1; KKT point (-1, 2), lambda = -1."""
    return Problem([(Quadratic([[1.0]]), [[1.0]]), (Quadratic([[1.0]], [-3.0], 4.5), [[1.0]])], [1.0], lower_bound_hint=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
