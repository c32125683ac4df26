import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nepj_admm.errors import DimensionMismatch, ZeroOperator
from nepj_admm.linalg import LinOp, op_norm, project_onto_range_adjoint, range_contains, spectral_summary


def test_spectral_identity():
    s = spectral_summary(np.eye(2))
    assert (s.op_norm_sq, s.sigma_plus, s.sigma_min) == pytest.approx((1, 1, 1))


def test_spectral_diag_with_zero():
    s = spectral_summary(np.diag([2.0, 0.0]))
    assert (s.op_norm_sq, s.sigma_plus, s.sigma_min) == pytest.approx((4, 4, 0), abs=1e-12)


def test_spectral_row_vector():
    s = spectral_summary(np.array([[1.0, 1.0]]))
    assert s.op_norm_sq == pytest.approx(2)
    assert s.sigma_plus == pytest.approx(2)
    assert s.sigma_min == pytest.approx(0, abs=1e-12)


def test_spectral_zero_raises():
    with pytest.raises(ZeroOperator):
        spectral_summary(np.zeros((3, 2)))


def _brute(A, tol=1e-10):
    ev = np.linalg.svd(A, compute_uv=False) ** 2
    full = np.zeros(A.shape[1])
    full[: len(ev)] = ev
    top = full.max()
    return top, full[full > tol * top].min(), full.min()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 20), st.integers(0, 2**31 - 1))
def test_spectral_matches_svd(m, n, rank, seed):
    rng = np.random.default_rng(seed)
    r = max(1, min(rank, m, n))
    A = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    s = spectral_summary(A)
    top, plus, low = _brute(A)
    assert s.op_norm_sq == pytest.approx(top, rel=1e-9)
    assert s.sigma_plus == pytest.approx(plus, rel=1e-9)
    assert abs(s.sigma_min - low) <= 1e-9 * top
    assert s.sigma_min <= s.sigma_plus <= s.op_norm_sq * (1 + 1e-12)
    assert s.sigma_plus > s.rank_tol * s.op_norm_sq


def test_spectral_large_iterative_path(rng):
    # more than 512 columns switches to the Gram/iterative route
    A = rng.standard_normal((40, 600))
    s = spectral_summary(A)
    sv = np.linalg.svd(A, compute_uv=False) ** 2
    assert s.op_norm_sq == pytest.approx(sv.max(), rel=1e-8)
    assert s.sigma_plus == pytest.approx(sv.min(), rel=1e-6)
    assert s.sigma_min == 0.0


def test_linop_adjoint_consistency(rng):
    M = rng.standard_normal((5, 3))
    op = LinOp(5, 3, lambda x: M @ x, lambda y: M.T @ y)
    for _ in range(100):
        x, y = rng.standard_normal(3), rng.standard_normal(5)
        lhs, rhs = op.apply(x) @ y, x @ op.apply_adjoint(y)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
    assert np.allclose(op.to_dense(), M, rtol=1e-12, atol=0)


def test_linop_dense_agrees(rng):
    M = rng.standard_normal((4, 6))
    op = LinOp.from_matrix(M)
    x = rng.standard_normal(6)
    assert np.allclose(op.apply(x), M @ x, rtol=1e-12, atol=0)
    with pytest.raises(DimensionMismatch):
        op.apply(np.ones(5))


def test_op_norm():
    assert op_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0)


@pytest.mark.parametrize(
    "S,u,expected",
    [
        (np.eye(2), [3.0, -1.0], [3.0, -1.0]),
        (np.diag([2.0, 0.0]), [1.0, 1.0], [1.0, 0.0]),
        (np.array([[1.0, 1.0]]), [1.0, 0.0], [0.5, 0.5]),
    ],
)
def test_projection_examples(S, u, expected):
    P = project_onto_range_adjoint(S, np.array(u))
    assert np.allclose(P, expected, atol=1e-12)
    s = spectral_summary(S)
    assert np.linalg.norm(P) <= np.linalg.norm(S @ np.array(u)) / np.sqrt(s.sigma_plus) + 1e-9


def test_projection_lemma_random(rng):
    for _ in range(100):
        m, n = rng.integers(1, 7, size=2)
        r = rng.integers(1, min(m, n) + 1)
        S = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        u = rng.standard_normal(n)
        P = project_onto_range_adjoint(S, u)
        sp = spectral_summary(S).sigma_plus
        assert np.linalg.norm(P) <= np.linalg.norm(S @ u) / np.sqrt(sp) + 1e-9
        assert np.allclose(project_onto_range_adjoint(S, P), P, atol=1e-12)
        # oracle: pseudo-inverse projector onto the row space
        assert np.allclose(P, np.linalg.pinv(S) @ S @ u, atol=1e-9)


def test_projection_zero_raises():
    with pytest.raises(ZeroOperator):
        project_onto_range_adjoint(np.zeros((2, 2)), np.ones(2))


def test_range_contains_examples():
    assert range_contains(np.eye(3), np.array([1.0, -2.0, 7.0]))
    assert not range_contains(np.diag([1.0, 0.0]), np.array([0.0, 1.0]))
    col = np.array([[1.0], [1.0]])
    assert range_contains(col, np.array([2.0, 2.0]))
    assert not range_contains(col, np.array([1.0, -1.0]))


def test_range_contains_degenerate():
    assert range_contains(np.zeros((0, 0)), np.zeros(0)) in (True, False)
    assert not range_contains(np.ones((2, 2)), np.ones(3))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 3), elements=st.floats(-5, 5)), arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_range_contains_image(A, x):
    # anything of the form A x lies in Im(A)
    if np.abs(A).max() > 0:
        assert range_contains(A, A @ x, tol=1e-8)
