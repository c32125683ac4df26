"""Step-size conditions, rate constants and automatic parameter selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .bregman import BregmanGenerator, CancelCoupling, Euclidean
from .errors import (
    InfeasibleDeltas,
    InfeasibleForBeta,
    MissingLowerBound,
    ThetaOutOfRange,
)
from .linalg import SpectralSummary, op_norm, spectral_summary
from .problem import Problem, augmented_lagrangian, validate

__all__ = [
    "SolverConfig",
    "RateConstants",
    "gamma_theta",
    "c1",
    "deltas",
    "delta_lambda",
    "auto_tune",
    "eta0_and_deltaL0",
    "rate_constants",
    "default_generators",
    "make_config",
    "practical_moduli",
    "CHECK_LEVELS",
]

CHECK_LEVELS = ("off", "cheap", "full")
AUTO_TUNE_MARGIN = 0.1

Generators = Union[Sequence[BregmanGenerator], Callable[[int, int], BregmanGenerator]]


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not (0.0 < theta < 2.0):
        raise ThetaOutOfRange(f"theta out of (0,2): {theta}")
    return theta


@dataclass
class SolverConfig:
    """Algorithm parameters.

    ``moduli[i]`` is ``(m_i, M_i)``; every generator used for block ``i``
    must belong to that class. ``generators`` is either one generator per
    block or a factory ``(block_index, k) -> generator`` (0-based block).
    ``mode="practical"`` allows ``delta_i <= 0``; certificates are then
    advisory only.
    """

    beta: float
    theta: float
    alpha: float
    moduli: List[Tuple[float, float]]
    max_iter: int = 1000
    rho_tol: float = 1e-6
    check_level: str = "cheap"
    rng_seed: int = 0
    mode: str = "certified"
    generators: Optional[Generators] = None
    inner_tol: float = 1e-10
    inner_max_iter: int = 200

    def __post_init__(self):
        self.theta = _check_theta(self.theta)
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.check_level not in CHECK_LEVELS:
            raise ValueError(f"check_level must be one of {CHECK_LEVELS}")
        if self.mode not in ("certified", "practical"):
            raise ValueError("mode must be 'certified' or 'practical'")
        mods = []
        for mM in self.moduli:
            m, M = (mM, mM) if np.isscalar(mM) else mM
            if not (0 < m <= M):
                raise ValueError(f"moduli must satisfy 0 < m <= M, got ({m}, {M})")
            mods.append((float(m), float(M)))
        self.moduli = mods

    @property
    def m(self) -> List[float]:
        return [mM[0] for mM in self.moduli]

    @property
    def M(self) -> List[float]:
        return [mM[1] for mM in self.moduli]

    def generator(self, i: int, k: int) -> BregmanGenerator:
        if callable(self.generators):
            return self.generators(i, k)
        return self.generators[i]


def default_generators(prob: Problem, beta: float, m: Sequence[float]) -> List[BregmanGenerator]:
    """Euclidean generators on smooth blocks, coupling-canceling on the rest."""
    gens = []
    for blk, mi in zip(prob.blocks, m):
        if blk.f.smooth:
            gens.append(Euclidean(mi, blk.f.dim))
        else:
            gens.append(CancelCoupling.with_modulus(blk.A, beta, mi))
    return gens


def practical_moduli(prob: Problem, beta: float) -> List[float]:
    """``m_i = (p - 1) beta ||A_i||^2``, a proximal weight that keeps the
    Jacobi sweep contractive on typical problems (no guarantee)."""
    return [max((prob.p - 1) * beta * op_norm(blk.A) ** 2, 1e-8) for blk in prob.blocks]


def make_config(prob: Problem, beta: float, theta: float, alpha: float, m: Sequence[float], **kwargs) -> SolverConfig:
    """Config whose moduli are read off the default generators for ``m``."""
    if len(m) != prob.p:
        raise ValueError(f"need {prob.p} moduli, got {len(m)}")
    gens = kwargs.pop("generators", None) or default_generators(prob, beta, m)
    moduli = [(g.m, g.M) for g in gens]
    return SolverConfig(beta=beta, theta=theta, alpha=alpha, moduli=moduli, generators=gens, **kwargs)


def gamma_theta(theta: float) -> float:
    """``theta / (1 - |theta - 1|)^2``; minimal (= 1) at ``theta = 1``."""
    theta = _check_theta(theta)
    return theta / (1.0 - abs(theta - 1.0)) ** 2


def c1(theta: float, beta: float, sigma_plus_p: float) -> float:
    theta = _check_theta(theta)
    t = abs(theta - 1.0)
    return 2.0 * t / (beta * theta * (1.0 - t) * sigma_plus_p)


@dataclass
class _Geometry:
    p: int
    sigma_plus: float
    ap_sq: float
    ap_adj_sq: float
    max_other_sq: float
    lip_p: float
    cross: np.ndarray  # cross[i, l] = ||A_i^T A_l||


def _geometry(prob: Problem, spec: Optional[Sequence[Optional[SpectralSummary]]] = None) -> _Geometry:
    p = prob.p
    mats = [blk.A.to_dense() for blk in prob.blocks]
    sp = spec[-1] if spec is not None and spec[-1] is not None else spectral_summary(mats[-1])
    if spec is not None:
        others = [s.op_norm_sq if s is not None else 0.0 for s in spec[:-1]]
    else:
        others = [op_norm(M) ** 2 for M in mats[:-1]]
    cross = np.zeros((p, p))
    for i in range(p):
        for l in range(p):
            if i != l:
                cross[i, l] = np.linalg.norm(mats[i].T @ mats[l], 2)
    return _Geometry(p, sp.sigma_plus, sp.op_norm_sq, sp.op_norm_sq, max(others), prob.last.f.lip_grad, cross)


def _bracket_other(alpha, beta, gamma, g: _Geometry) -> float:
    # the constant subtracted from m_i/4 in delta_i, i < p
    return ((g.p - 2 + alpha) / 2.0 + 2.0 * gamma * (g.p + 1) * g.ap_adj_sq / g.sigma_plus) * beta * g.max_other_sq


def _last_penalty(alpha, beta, gamma, M_p, g: _Geometry) -> float:
    return beta * (g.p - 1) * g.ap_sq / (2.0 * alpha) + gamma * (g.p + 1) * (g.lip_p ** 2 + 2.0 * M_p ** 2) / (
        beta * g.sigma_plus
    )


def deltas(cfg: SolverConfig, prob: Problem, spec=None) -> List[float]:
    """The ``p`` step-size margins ``delta_i``; all positive iff certified."""
    g = _geometry(prob, spec)
    gam = gamma_theta(cfg.theta)
    m, M = cfg.m, cfg.M
    K = _bracket_other(cfg.alpha, cfg.beta, gam, g)
    out = [m[i] / 4.0 - K for i in range(g.p - 1)]
    out.append(m[-1] / 4.0 - _last_penalty(cfg.alpha, cfg.beta, gam, M[-1], g))
    return out


def delta_lambda(cfg: SolverConfig, prob: Problem, delta: Sequence[float], spec=None) -> float:
    dmin = min(delta)
    if not dmin > 0:
        raise InfeasibleDeltas(f"min delta_i = {dmin:.6g} <= 0")
    g = _geometry(prob, spec)
    gam = gamma_theta(cfg.theta)
    M_p = cfg.M[-1]
    inner = 2.0 * cfg.beta ** 2 * g.ap_adj_sq * g.max_other_sq + g.lip_p ** 2 + 2.0 * M_p ** 2
    return 1.0 / (cfg.theta * gam * (g.p + 1) / (g.sigma_plus * dmin) * inner)


def beta_window_min(prob: Problem, theta: float, spec=None) -> float:
    """Penalty above which some ``(alpha, m_p)`` gives ``delta_p > 0``."""
    g = _geometry(prob, spec)
    return math.sqrt(128.0) * gamma_theta(theta) * (g.p + 1) * g.lip_p / g.sigma_plus


def auto_tune(prob: Problem, beta: float, theta: float, margin: float = AUTO_TUNE_MARGIN, **kwargs) -> SolverConfig:
    """Choose ``alpha`` and the moduli so that every ``delta_i > 0``.

    With a Euclidean last-block generator (``M_p = m_p``), ``delta_p`` is
    concave in ``m_p`` with peak value ``beta sigma / (128 gamma (p+1))``
    minus the ``alpha`` and ``L_p`` terms. ``alpha`` is set so its term
    takes half of the slack left by the ``L_p`` term, ``m_p`` sits at the
    peak, and ``m_i = 4 (1 + margin) K`` for the others, where ``K`` is
    the bracketed constant of ``delta_i``.

    Raises:
        InfeasibleForBeta: when the ``m_p`` window is empty for ``beta``.
    """
    theta = _check_theta(theta)
    g = _geometry(prob)
    gam = gamma_theta(theta)
    curv = 2.0 * gam * (g.p + 1) / (beta * g.sigma_plus)
    peak = 1.0 / (64.0 * curv)
    lip_term = gam * (g.p + 1) * g.lip_p ** 2 / (beta * g.sigma_plus)
    slack = peak - lip_term
    if not slack > 0:
        bmin = beta_window_min(prob, theta)
        raise InfeasibleForBeta(
            f"no admissible m_p for beta={beta:g}: window opens only for beta > {bmin:.6g}",
            beta=beta,
            beta_min=bmin,
        )
    alpha = beta * (g.p - 1) * g.ap_sq / slack
    m_p = 1.0 / (8.0 * curv)
    K = _bracket_other(alpha, beta, gam, g)
    m_other = 4.0 * (1.0 + margin) * K if K > 0 else 1.0
    m = [m_other] * (g.p - 1) + [m_p]
    cfg = make_config(prob, beta, theta, alpha, m, **kwargs)
    d = deltas(cfg, prob)
    if min(d) <= 0:  # guards rounding at the window edge
        raise InfeasibleForBeta(
            f"auto-tuned deltas not positive for beta={beta:g} (min {min(d):.3e})",
            beta=beta,
            beta_min=beta_window_min(prob, theta),
        )
    return cfg


def lower_bound_evidence(prob: Problem, beta: float, rng_seed: int = 0) -> Tuple[str, Optional[float]]:
    if prob.lower_bound_hint is not None:
        return ("user_hint", prob.lower_bound_hint)
    return validate(prob, sample_budget=200, beta=beta, rng_seed=rng_seed).a3_lower_bound


def eta0_and_deltaL0(prob: Problem, cfg: SolverConfig, x0, lambda0, evidence=None) -> Tuple[float, float]:
    """``eta_0 = m_p/(4 M_p^2) ||A_p^T lambda0 - grad f_p(x_p^0)||^2`` and
    ``Delta L_0 = L_beta(x0, lambda0) - v_lb + eta_0``.

    ``v_lb`` is the user hint when present, otherwise a sampled minimum of the
    penalized objective (weak evidence, not a bound).
    """
    m_p, M_p = cfg.moduli[-1]
    Ap = prob.last.A
    lambda0 = np.asarray(lambda0, dtype=float)
    R0 = Ap.apply_adjoint(lambda0) - prob.last.f.gradient(np.asarray(x0[-1], dtype=float))
    eta0 = m_p / (4.0 * M_p ** 2) * float(R0 @ R0)
    if evidence is None:
        evidence = lower_bound_evidence(prob, cfg.beta, cfg.rng_seed)
    source, v = evidence
    if v is None:
        if cfg.check_level == "full":
            raise MissingLowerBound("no lower-bound evidence for v(beta)")
        return eta0, float("nan")
    L0 = augmented_lagrangian(prob, x0, lambda0, cfg.beta)
    return eta0, float(L0 - v + eta0)


@dataclass
class RateConstants:
    """Every constant the certificates need, for one config and start point."""

    gamma_theta: float
    c1: float
    delta: List[float]
    delta_lambda: Optional[float]
    sigma_plus_p: float
    norms: dict
    lip_p: float
    eta0: float
    delta_L0: float
    beta: float
    theta: float
    alpha: float
    moduli: List[Tuple[float, float]]
    residual_factors: List[float]
    lower_bound: Tuple[str, Optional[float]]
    p: int
    certified: bool = False

    @property
    def min_delta(self) -> float:
        return min(self.delta)

    def to_dict(self) -> dict:
        return {
            "gamma_theta": self.gamma_theta,
            "c1": self.c1,
            "delta": list(self.delta),
            "delta_lambda": self.delta_lambda,
            "sigma_plus_p": self.sigma_plus_p,
            "norms": dict(self.norms),
            "lip_p": self.lip_p,
            "eta0": self.eta0,
            "delta_L0": self.delta_L0,
            "beta": self.beta,
            "theta": self.theta,
            "alpha": self.alpha,
            "moduli": [list(mM) for mM in self.moduli],
            "residual_factors": list(self.residual_factors),
            "lower_bound": {"source": self.lower_bound[0], "value": self.lower_bound[1]},
            "p": self.p,
            "certified": self.certified,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateConstants":
        lb = d.get("lower_bound") or {"source": "unknown", "value": None}
        return cls(
            gamma_theta=d["gamma_theta"],
            c1=d["c1"],
            delta=list(d["delta"]),
            delta_lambda=d["delta_lambda"],
            sigma_plus_p=d["sigma_plus_p"],
            norms=dict(d["norms"]),
            lip_p=d["lip_p"],
            eta0=d["eta0"],
            delta_L0=d["delta_L0"],
            beta=d["beta"],
            theta=d["theta"],
            alpha=d["alpha"],
            moduli=[tuple(mM) for mM in d["moduli"]],
            residual_factors=list(d["residual_factors"]),
            lower_bound=(lb["source"], lb["value"]),
            p=d["p"],
            certified=bool(d["certified"]),
        )


def rate_constants(prob: Problem, cfg: SolverConfig, x0, lambda0, evidence=None) -> RateConstants:
    g = _geometry(prob)
    delta = deltas(cfg, prob)
    certified = cfg.mode == "certified" and min(delta) > 0
    dl = delta_lambda(cfg, prob, delta) if min(delta) > 0 else None
    if evidence is None:
        evidence = lower_bound_evidence(prob, cfg.beta, cfg.rng_seed)
    eta0, dL0 = eta0_and_deltaL0(prob, cfg, x0, lambda0, evidence=evidence)
    factors = [cfg.beta * float(g.cross[i].sum()) + cfg.M[i] for i in range(g.p)]
    return RateConstants(
        gamma_theta=gamma_theta(cfg.theta),
        c1=c1(cfg.theta, cfg.beta, g.sigma_plus),
        delta=delta,
        delta_lambda=dl,
        sigma_plus_p=g.sigma_plus,
        norms={"Ap_sq": g.ap_sq, "Ap_adj_sq": g.ap_adj_sq, "max_other_sq": g.max_other_sq},
        lip_p=g.lip_p,
        eta0=eta0,
        delta_L0=dL0,
        beta=cfg.beta,
        theta=cfg.theta,
        alpha=cfg.alpha,
        moduli=list(cfg.moduli),
        residual_factors=factors,
        lower_bound=evidence,
        p=g.p,
        certified=certified,
    )
