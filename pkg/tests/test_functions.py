import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nepj_admm.errors import DimensionMismatch, InvalidProblem
from nepj_admm.functions import (
    BoxIndicator,
    FiniteSetIndicator,
    L1Norm,
    ProxCustom,
    Quadratic,
    SmoothCustom,
    function_from_dict,
)


def _prox_local_test(f, v, tau, rng, n=50, scale=1e-3):
    z = f.prox(v, tau)
    obj = lambda y: tau * f.value(y) + 0.5 * float((y - v) @ (y - v))
    base = obj(z)
    for _ in range(n):
        y = f.project(z + scale * rng.standard_normal(f.dim))
        assert base <= obj(y) + 1e-12


def test_quadratic_value_gradient_lipschitz(rng):
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    f = Quadratic(Q, [1.0, -1.0], 2.0)
    x = np.array([1.0, 2.0])
    assert f.value(x) == pytest.approx(0.5 * x @ Q @ x + 1 - 2 + 2)
    assert np.allclose(f.gradient(x), Q @ x + [1, -1])
    for _ in range(100):
        a, b = rng.standard_normal(2), rng.standard_normal(2)
        assert np.linalg.norm(f.gradient(a) - f.gradient(b)) <= f.lip_grad * np.linalg.norm(a - b) + 1e-12


def test_quadratic_rejects_asymmetric():
    with pytest.raises(InvalidProblem):
        Quadratic([[1.0, 2.0], [0.0, 1.0]])


def test_l1_soft_threshold():
    f = L1Norm(1.0, 3)
    assert np.allclose(f.prox(np.array([2.0, -0.5, -3.0]), 1.0), [1.0, 0.0, -2.0])
    assert f.value(np.array([3.0, -1.0, 0.0])) == 4.0


@settings(max_examples=40, deadline=None)
@given(st.floats(-10, 10), st.floats(0.01, 5), st.floats(0.1, 3))
def test_l1_prox_vs_grid(v, tau, w):
    f = L1Norm(w, 1)
    z = f.prox(np.array([v]), tau)[0]
    grid = np.linspace(-12, 12, 240001)
    best = grid[np.argmin(tau * w * np.abs(grid) + 0.5 * (grid - v) ** 2)]
    assert abs(z - best) <= 2e-4


def test_box(rng):
    f = BoxIndicator([0.0, -np.inf], [1.0, 2.0])
    assert f.value(np.array([2.0, 0.0])) == np.inf
    assert f.value(np.array([0.5, -100.0])) == 0.0
    assert np.allclose(f.prox(np.array([3.0, 5.0]), 7.0), [1.0, 2.0])
    _prox_local_test(f, np.array([0.3, 4.0]), 1.0, rng)


def test_finite_set_prox_and_tie_break():
    f = FiniteSetIndicator([[1.0], [0.0]])
    assert f.prox(np.array([0.4]), 1.0)[0] == 0.0
    assert f.prox(np.array([0.6]), 1.0)[0] == 1.0
    # equidistant: lexicographically smaller point
    assert f.prox(np.array([0.5]), 1.0)[0] == 0.0
    g = FiniteSetIndicator([[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(g.prox(np.array([0.5, 0.5]), 1.0), [0.0, 1.0])


def test_finite_set_enumeration_matches_brute(rng):
    P = rng.standard_normal((7, 3))
    f = FiniteSetIndicator(P)
    for _ in range(20):
        B = rng.standard_normal((3, 3))
        H = B @ B.T + np.eye(3)
        g = rng.standard_normal(3)
        z = f.argmin_quadratic(H, g)
        vals = [0.5 * p @ H @ p + g @ p for p in P]
        assert np.allclose(z, P[int(np.argmin(vals))])


def test_smooth_and_prox_custom(rng):
    f = SmoothCustom(lambda x: float(np.sum(np.log1p(x**2))), lambda x: 2 * x / (1 + x**2), 2.0, 2)
    assert f.smooth and not f.lsc_by_kind
    x = np.array([0.3, -1.0])
    assert f.value(x) == pytest.approx(np.log1p(0.09) + np.log1p(1.0))
    g = ProxCustom(lambda x: float(np.abs(x).sum()), lambda v, t: np.sign(v) * np.maximum(np.abs(v) - t, 0), 2)
    _prox_local_test(g, np.array([1.5, -0.2]), 0.7, rng)
    with pytest.raises(DimensionMismatch):
        f.value(np.ones(3))


@pytest.mark.parametrize(
    "f",
    [
        Quadratic([[2.0, 0.0], [0.0, 1.0]], [0.1, 0.2], 0.3),
        L1Norm(0.25, 4),
        BoxIndicator([0.0, -np.inf], [np.inf, 1.0]),
        FiniteSetIndicator([[0.0, 1.0], [2.0, -1.0]]),
    ],
)
def test_dict_round_trip(f):
    g = function_from_dict(f.to_dict(), f.dim)
    assert g.to_dict() == f.to_dict()
    assert type(g) is type(f)


def test_unknown_kind():
    with pytest.raises(InvalidProblem):
        function_from_dict({"kind": "nope"}, 1)
