import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SHIPPED, scalar_qp, shipped
from nepj_admm.errors import InfeasibleDeltas, InfeasibleForBeta, MissingLowerBound, ThetaOutOfRange
from nepj_admm.functions import L1Norm, Quadratic
from nepj_admm.params import (
    RateConstants,
    SolverConfig,
    auto_tune,
    beta_window_min,
    c1,
    delta_lambda,
    deltas,
    eta0_and_deltaL0,
    gamma_theta,
    make_config,
    rate_constants,
)
from nepj_admm.problem import Problem


@pytest.mark.parametrize("theta,expected", [(1.0, 1.0), (1.5, 6.0), (0.5, 2.0)])
def test_gamma_theta(theta, expected):
    assert gamma_theta(theta) == pytest.approx(expected)


@pytest.mark.parametrize("theta", [0.0, 2.0, -1.0, 2.5])
def test_theta_range(theta):
    with pytest.raises(ThetaOutOfRange):
        gamma_theta(theta)
    with pytest.raises(ThetaOutOfRange):
        c1(theta, 1.0, 1.0)


def test_gamma_minimal_at_one():
    grid = np.linspace(0.01, 1.99, 199)
    assert all(gamma_theta(1.0) <= gamma_theta(t) for t in grid)


def test_c1_examples():
    assert c1(1.0, 3.0, 2.0) == 0.0
    assert c1(0.5, 1.0, 1.0) == pytest.approx(4.0)
    assert c1(1.5, 2.0, 4.0) == pytest.approx(1.0 / 6.0)


def _cfg(m1, m2, alpha=250.0, beta=100.0, theta=1.0):
    return SolverConfig(beta=beta, theta=theta, alpha=alpha, moduli=[(m1, m1), (m2, m2)])


def test_deltas_worked_example():
    prob = scalar_qp()
    d = deltas(_cfg(52800.0, 2.0), prob)
    assert d[1] == pytest.approx(0.03, abs=1e-12)
    assert d[0] == pytest.approx(100.0, abs=1e-9)


def test_delta_lambda_worked_example():
    prob = scalar_qp()
    cfg = _cfg(52800.0, 2.0)
    d = deltas(cfg, prob)
    assert delta_lambda(cfg, prob, d) == pytest.approx(1.0 / (100.0 * 20009.0), rel=1e-9)
    # linear in min delta
    assert delta_lambda(cfg, prob, [2 * v for v in d]) == pytest.approx(2 * delta_lambda(cfg, prob, d), rel=1e-12)
    with pytest.raises(InfeasibleDeltas):
        delta_lambda(cfg, prob, [-1.0, 1.0])


def test_tiny_moduli_infeasible():
    assert all(v < 0 for v in deltas(_cfg(1e-12, 1e-12), scalar_qp()))


def test_deltas_decrease_in_beta():
    prob = shipped("lasso3")
    vals = [deltas(SolverConfig(beta=b, theta=1.0, alpha=2.0, moduli=[(50.0, 50.0)] * 3), prob)[:-1] for b in (1, 2, 5, 10)]
    for a, b in zip(vals, vals[1:]):
        assert all(x > y for x, y in zip(a, b))


@pytest.mark.parametrize("name", SHIPPED)
def test_auto_tune_feasible(name):
    prob = shipped(name)
    cfg = auto_tune(prob, 100.0, 1.0)
    assert min(deltas(cfg, prob)) > 0
    assert all(m == M for m, M in cfg.moduli[-1:])


def test_auto_tune_alpha_scale():
    cfg = auto_tune(scalar_qp(), 100.0, 1.0)
    # the alpha window opens above 64 gamma (p+1)(p-1)|A_p|^2 / sigma = 192
    assert cfg.alpha > 192.0


def test_auto_tune_infeasible_small_beta():
    with pytest.raises(InfeasibleForBeta) as info:
        auto_tune(scalar_qp(), 1.0, 1.0)
    assert info.value.beta_min == pytest.approx(math.sqrt(128) * 3, rel=1e-12)


def test_beta_min_is_sharp():
    prob = scalar_qp()
    bmin = beta_window_min(prob, 1.0)
    assert min(deltas(auto_tune(prob, bmin * 1.01, 1.0), prob)) > 0
    with pytest.raises(InfeasibleForBeta):
        auto_tune(prob, bmin * 0.99, 1.0)


@pytest.mark.parametrize("theta", [1.9, 1.99, 0.01])
def test_auto_tune_extreme_theta(theta):
    prob = scalar_qp()
    for beta in (10.0, 1e3, 1e6):
        try:
            cfg = auto_tune(prob, beta, theta)
        except InfeasibleForBeta:
            continue
        assert min(deltas(cfg, prob)) > 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 1.9), st.floats(0.0, 4.0))
def test_auto_tune_never_negative(seed, theta, logbeta):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    B = rng.standard_normal((d, d))
    prob = Problem(
        [(L1Norm(1.0, 2), rng.standard_normal((d, 2))), (Quadratic(B @ B.T + np.eye(d)), np.eye(d) * rng.uniform(0.5, 2))],
        rng.standard_normal(d),
    )
    try:
        cfg = auto_tune(prob, 10.0**logbeta, theta)
    except InfeasibleForBeta as exc:
        assert exc.beta_min >= 10.0**logbeta * (1 - 1e-9)
        return
    assert min(deltas(cfg, prob)) > 0


def _toy_like():
    return Problem([(Quadratic([[1.0]]), [[1.0]]), (Quadratic([[1.0]], [-0.6], 0.18), [[1.0]])], [1.0], lower_bound_hint=0.0)


def test_eta0_example():
    prob = _toy_like()
    cfg = make_config(prob, 1.0, 1.0, 1.0, [2.0, 2.0], mode="practical")
    eta0, _ = eta0_and_deltaL0(prob, cfg, [np.zeros(1), np.array([1.2])], np.zeros(1))
    assert eta0 == pytest.approx(0.045, abs=1e-15)


def test_eta0_zero_at_matched_multiplier():
    prob = _toy_like()
    cfg = make_config(prob, 1.0, 1.0, 1.0, [2.0, 2.0], mode="practical")
    x0 = [np.zeros(1), np.array([1.7])]
    eta0, dL0 = eta0_and_deltaL0(prob, cfg, x0, np.array([1.7 - 0.6]))
    assert eta0 == 0.0
    assert dL0 >= 0


def test_missing_lower_bound_full_checks():
    prob = Problem([(L1Norm(1.0, 1), [[1.0]]), (Quadratic([[1.0]]), [[1.0]])], [1.0])
    cfg = make_config(prob, 1.0, 1.0, 1.0, [1.0, 1.0], mode="practical", check_level="full")
    with pytest.raises(MissingLowerBound):
        eta0_and_deltaL0(prob, cfg, [np.zeros(1)] * 2, np.zeros(1), evidence=("unknown", None))


@pytest.mark.parametrize("name", SHIPPED)
def test_delta_L0_nonnegative(name, rng):
    prob = shipped(name)
    cfg = auto_tune(prob, 100.0, 1.0)
    for _ in range(10):
        x0 = [blk.f.sample_domain(rng, scale=2.0) for blk in prob.blocks]
        lam0 = rng.standard_normal(prob.d)
        C = rate_constants(prob, cfg, x0, lam0)
        assert C.delta_L0 >= 0 and C.eta0 >= 0 and C.certified


def test_rate_constants_dict_round_trip():
    prob = shipped("lasso3")
    cfg = auto_tune(prob, 100.0, 0.5)
    C = rate_constants(prob, cfg, prob.default_x0(), np.zeros(prob.d))
    assert RateConstants.from_dict(C.to_dict()) == C
    assert C.c1 == pytest.approx(c1(0.5, 100.0, C.sigma_plus_p))


def test_config_validation():
    with pytest.raises(ThetaOutOfRange):
        SolverConfig(beta=1.0, theta=2.0, alpha=1.0, moduli=[1.0, 1.0])
    with pytest.raises(ValueError):
        SolverConfig(beta=-1.0, theta=1.0, alpha=1.0, moduli=[1.0, 1.0])
    with pytest.raises(ValueError):
        SolverConfig(beta=1.0, theta=1.0, alpha=1.0, moduli=[(2.0, 1.0)])
    with pytest.raises(ValueError):
        SolverConfig(beta=1.0, theta=1.0, alpha=1.0, moduli=[1.0], check_level="medium")
