"""Per-iteration analysis quantities, inequality checks and rate certificates.

Every iteration ``k >= 1`` of the Jacobi ADMM produces an
:class:`IterationRecord` holding the multiplier estimate ``lambda_hat``,
the stationarity witnesses ``R_i`` (so that ``0 in df_i(x_i) - A_i^T
lambda_hat + R_i``), the potential ``L_hat = L_beta + eta`` and a set of
named verdicts. Identity-type checks hold for any parameters; inequality
checks are guaranteed only when every ``delta_i > 0`` and are marked
advisory otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import math

import numpy as np

from .errors import UncertifiedRun
from .params import RateConstants, SolverConfig
from .problem import Problem
from .subproblem import BlockCache, SubproblemInstance, assemble_instances, solve_block

__all__ = [
    "Verdict",
    "IterationRecord",
    "DiagnosticsContext",
    "initial_record",
    "record_iteration",
    "check_inequalities",
    "RateCertificate",
    "rate_certificate",
    "IDENTITY_TOL",
    "INEQUALITY_TOL",
    "CSV_CHECKS",
]

IDENTITY_TOL = 1e-10
INEQUALITY_TOL = 1e-7
BLOCK_DESCENT_TOL = 1e-8
EQUIVALENCE_TOL = 1e-8

IDENTITY_CHECKS = ("dualrec", "feasid", "lambda_hat", "R_def", "inclusion", "affine")
ADVISORY_IN_PRACTICAL = ("thetabound", "potdescent", "floor")
# CSV column suffix -> check name
CSV_CHECKS = (
    ("check_descent", "descent"),
    ("check_dualrec", "dualrec"),
    ("check_thetabound", "thetabound"),
    ("check_potdescent", "potdescent"),
    ("check_floor", "floor"),
    ("check_feasid", "feasid"),
)


class Verdict(NamedTuple):
    """``margin`` is ``allowed - observed`` before tolerance; ``holds``
    already includes the tolerance."""

    holds: bool
    margin: float
    advisory: bool = False


def _norm(v) -> float:
    if v.ndim != 1:
        v = v.ravel()
    return math.sqrt(float(v @ v))


def _ineq(lhs: float, rhs: float, scale: float, tol: float = INEQUALITY_TOL, advisory=False) -> Verdict:
    margin = rhs - lhs
    return Verdict(bool(margin >= -tol * (1.0 + abs(scale))), float(margin), advisory)


def _ident(residual: float, scale: float, tol: float = IDENTITY_TOL) -> Verdict:
    return Verdict(bool(residual <= tol * (1.0 + abs(scale))), -float(residual))


@dataclass
class IterationRecord:
    k: int
    lambda_hat: Optional[np.ndarray]
    R: List[Optional[np.ndarray]]
    delta_w: List[Optional[np.ndarray]]
    u: Optional[np.ndarray]
    eta: float
    L_aug: float
    L_hat: float
    theta_lambda: float
    theta_p: float
    feas: float
    stat_res: List[float]
    norm_dx: List[float]
    norm_dlambda: float
    Ap_dlambda: np.ndarray
    cross_term: float
    checks: Dict[str, Verdict] = field(default_factory=dict)

    @property
    def u_norm(self) -> float:
        return float("nan") if self.u is None else float(_norm(self.u))

    @property
    def max_residual(self) -> float:
        return max([self.feas] + list(self.stat_res))

    def failed(self, include_advisory: bool = False) -> List[str]:
        return [n for n, v in self.checks.items() if not v.holds and (include_advisory or not v.advisory)]


class DiagnosticsContext:
    """Per-run cache: dense blocks, Gram blocks and the rate constants."""

    def __init__(self, prob: Problem, cfg: SolverConfig, constants: RateConstants, equivalence_samples: int = 20):
        self.prob = prob
        self.cfg = cfg
        self.constants = constants
        self.mats = [blk.A.to_dense() for blk in prob.blocks]
        p = prob.p
        self.gram = [[self.mats[i].T @ self.mats[j] for j in range(p)] for i in range(p)]
        self.norm_sq = [float(np.linalg.norm(M, 2) ** 2) if np.any(M) else 0.0 for M in self.mats]
        self.certified = constants.certified
        self.equivalence_samples = equivalence_samples
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.resolve_cache = BlockCache()

    def L(self, x: Sequence[np.ndarray], lam: np.ndarray) -> float:
        return self.L_parts(*self.parts(x), lam)

    def parts(self, x: Sequence[np.ndarray]):
        """Per-block ``(f_i(x_i), A_i x_i)``, reusable across mixed points."""
        return [blk.f.value(xi) for blk, xi in zip(self.prob.blocks, x)], [M @ xi for M, xi in zip(self.mats, x)]

    def L_parts(self, fvals, Ax, lam) -> float:
        r = sum(Ax) - self.prob.b
        return float(sum(fvals) - lam @ r + 0.5 * self.cfg.beta * (r @ r))


def _seed_Rp(ctx: DiagnosticsContext, x0, lam0) -> np.ndarray:
    fp = ctx.prob.last.f
    return ctx.mats[-1].T @ lam0 - fp.gradient(x0[-1])


def initial_record(ctx: DiagnosticsContext, state0) -> IterationRecord:
    """The ``k = 0`` record with the seed conventions
    ``dlambda^0 = 0``, ``dx_i^0 = 0`` (``i < p``), ``dx_p^0 = R_p^0 / M_p``."""
    p = ctx.prob.p
    M_p = ctx.cfg.moduli[-1][1]
    R0 = _seed_Rp(ctx, state0.x, state0.lam)
    L0 = ctx.L(state0.x, state0.lam)
    eta0 = ctx.constants.eta0
    r0 = ctx.prob.residual(state0.x)
    rnorm = float(_norm(R0))
    return IterationRecord(
        k=0,
        lambda_hat=None,
        R=[None] * (p - 1) + [R0],
        delta_w=[None] * p,
        u=None,
        eta=eta0,
        L_aug=L0,
        L_hat=L0 + eta0,
        theta_lambda=0.0,
        theta_p=0.0,
        feas=float(_norm(r0)),
        stat_res=[float("nan")] * (p - 1) + [rnorm],
        norm_dx=[0.0] * (p - 1) + [rnorm / M_p],
        norm_dlambda=0.0,
        Ap_dlambda=np.zeros(ctx.prob.last.f.dim),
        cross_term=0.0,
        checks={},
    )


def record_iteration(ctx: DiagnosticsContext, state_k, state_km1, prev: IterationRecord) -> IterationRecord:
    """Compute every analysis quantity of iteration ``k`` from two states.

    ``prev`` is the record of iteration ``k-1`` (it carries ``R_p^{k-1}``
    and ``A_p^T dlambda^{k-1}``). Checks requested by ``check_level`` are
    evaluated and stored in ``checks``.
    """
    prob, cfg, C = ctx.prob, ctx.cfg, ctx.constants
    p, k = prob.p, state_k.k
    beta, theta = cfg.beta, cfg.theta
    mats, gram = ctx.mats, ctx.gram
    x, xp = state_k.x, state_km1.x
    lam, lam_prev = state_k.lam, state_km1.lam
    dx = [a - b for a, b in zip(x, xp)]
    dlam = lam - lam_prev
    r = sum(M @ xi for M, xi in zip(mats, x)) - prob.b
    lam_hat = lam_prev - beta * r

    gens = [cfg.generator(i, k) for i in range(p)]
    dw = [g.grad(a) - g.grad(b) for g, a, b in zip(gens, x, xp)]
    R = []
    for i in range(p):
        Ri = dw[i].copy()
        for j in range(p):
            if j != i:
                Ri -= beta * (gram[i][j] @ dx[j])
        R.append(Ri)

    fp = prob.last.f
    Ap = mats[-1]
    grad_p = fp.gradient(x[-1])
    u = (grad_p - fp.gradient(xp[-1])) + (R[-1] - prev.R[-1])
    Ap_dlam = Ap.T @ dlam
    norm_dx = [float(_norm(v)) for v in dx]
    ndl = float(_norm(dlam))
    m = cfg.m
    c1 = C.c1
    apdl2 = float(Ap_dlam @ Ap_dlam)
    apdl2_prev = float(prev.Ap_dlambda @ prev.Ap_dlambda)
    eta = sum(m[i] / 4.0 * norm_dx[i] ** 2 for i in range(p)) + 0.5 * c1 * apdl2
    L_aug = ctx.L(x, lam)
    theta_lambda = ndl ** 2 / (beta * theta) + 0.5 * c1 * (apdl2 - apdl2_prev)
    coef_p = (p - 1) * beta * ctx.norm_sq[-1] / (2.0 * cfg.alpha) - m[-1] / 4.0
    theta_p = coef_p * (norm_dx[-1] ** 2 + prev.norm_dx[-1] ** 2)
    Adx = [M @ v for M, v in zip(mats, dx)]
    cross = beta * sum(float(Adx[i] @ Adx[j]) for i in range(p) for j in range(i))
    feas = float(_norm(r))
    stat = [float(_norm(Ri)) for Ri in R[:-1]]
    stat.append(float(_norm(grad_p - Ap.T @ lam_hat)))

    rec = IterationRecord(
        k=k,
        lambda_hat=lam_hat,
        R=R,
        delta_w=dw,
        u=u,
        eta=eta,
        L_aug=L_aug,
        L_hat=L_aug + eta,
        theta_lambda=theta_lambda,
        theta_p=theta_p,
        feas=feas,
        stat_res=stat,
        norm_dx=norm_dx,
        norm_dlambda=ndl,
        Ap_dlambda=Ap_dlam,
        cross_term=cross,
    )
    if cfg.check_level == "off":
        return rec

    rec.checks.update(check_inequalities(rec, prev, C, ctx))
    rec.checks.update(_definitional_checks(ctx, rec, state_k, state_km1, gens))
    if cfg.check_level == "full":
        rec.checks.update(_full_checks(ctx, rec, state_k, state_km1, gens))
    return rec


def check_inequalities(rec: IterationRecord, prev: IterationRecord, constants: RateConstants, ctx) -> Dict[str, Verdict]:
    """The descent, dual-recursion, Theta-bound, potential and feasibility
    checks between two consecutive records."""
    cfg = ctx.cfg
    p = ctx.prob.p
    beta, theta = cfg.beta, cfg.theta
    m = cfg.m
    advisory = not ctx.certified
    out: Dict[str, Verdict] = {}

    lhs = rec.L_aug - prev.L_aug
    quad = sum(m[i] / 2.0 * rec.norm_dx[i] ** 2 for i in range(p))
    dual = rec.norm_dlambda ** 2 / (theta * beta)
    rhs = rec.cross_term - quad + dual
    out["descent"] = _ineq(lhs, rhs, max(abs(rec.L_aug), abs(prev.L_aug), abs(rec.cross_term), quad, dual))

    target = (1.0 - theta) * prev.Ap_dlambda + theta * rec.u
    res = float(_norm(rec.Ap_dlambda - target))
    scale = max(float(_norm(rec.Ap_dlambda)), float(_norm(prev.Ap_dlambda)), rec.u_norm)
    out["dualrec"] = _ident(res, scale)

    bound = constants.gamma_theta / (beta * constants.sigma_plus_p) * rec.u_norm ** 2
    out["thetabound"] = _ineq(rec.theta_lambda, bound, max(abs(rec.theta_lambda), bound), advisory=advisory)

    dsum = sum(constants.delta[i] * (rec.norm_dx[i] ** 2 + prev.norm_dx[i] ** 2) for i in range(p))
    out["potdescent"] = _ineq(
        rec.L_hat - prev.L_hat, -dsum, max(abs(rec.L_hat), abs(prev.L_hat), abs(dsum)), advisory=advisory
    )

    coef = [(p - 2 + cfg.alpha) * beta * ctx.norm_sq[i] / 2.0 - m[i] / 4.0 for i in range(p - 1)]
    split = sum(c * rec.norm_dx[i] ** 2 for i, c in enumerate(coef)) + rec.theta_lambda + rec.theta_p
    out["potsplit"] = _ineq(
        rec.L_hat - prev.L_hat, split, max(abs(rec.L_hat), abs(prev.L_hat), abs(split)), advisory=advisory
    )

    source, v = constants.lower_bound
    if v is None:
        out["floor"] = Verdict(True, float("nan"), True)
    else:
        enforce = source == "user_hint" and ctx.certified
        out["floor"] = _ineq(v, rec.L_hat, max(abs(v), abs(rec.L_hat)), advisory=not enforce)

    expect = rec.norm_dlambda / (beta * theta)
    out["feasid"] = _ident(abs(rec.feas - expect), max(rec.feas, expect))
    return out


def _definitional_checks(ctx, rec, state_k, state_km1, gens) -> Dict[str, Verdict]:
    prob, cfg = ctx.prob, ctx.cfg
    beta, theta = cfg.beta, cfg.theta
    out = {}
    alt = state_km1.lam + (state_k.lam - state_km1.lam) / theta
    out["lambda_hat"] = _ident(
        float(_norm(rec.lambda_hat - alt)), max(float(_norm(rec.lambda_hat)), 1.0)
    )

    # R_i from the subproblem's smooth-part gradient at x_i^k (frozen data route)
    r_prev = sum(M @ xi for M, xi in zip(ctx.mats, state_km1.x)) - prob.b
    worst_R, worst_inc, scale_R, scale_inc = 0.0, 0.0, 1.0, 1.0
    for i, (blk, M) in enumerate(zip(prob.blocks, ctx.mats)):
        xi, xi0 = state_k.x[i], state_km1.x[i]
        c = r_prev - M @ xi0
        smooth_grad = M.T @ (beta * (M @ xi + c) - state_km1.lam) + (gens[i].grad(xi) - gens[i].grad(xi0))
        direct = smooth_grad + M.T @ rec.lambda_hat
        worst_R = max(worst_R, float(_norm(rec.R[i] - direct)))
        scale_R = max(scale_R, float(_norm(smooth_grad)), float(_norm(rec.R[i])))
        if blk.f.smooth:
            g = blk.f.gradient(xi)
            inc = g - M.T @ rec.lambda_hat + rec.R[i]
            worst_inc = max(worst_inc, float(_norm(inc)))
            scale_inc = max(scale_inc, float(_norm(g)))
    out["R_def"] = _ident(worst_R, scale_R)
    if any(blk.f.smooth and blk.f.kind != "quadratic" for blk in prob.blocks):
        # inner-solver blocks: the inclusion only holds to the inner tolerance
        out["inclusion"] = Verdict(worst_inc <= max(cfg.inner_tol * 10, IDENTITY_TOL * (1 + scale_inc)), -worst_inc)
    else:
        out["inclusion"] = _ident(worst_inc, scale_inc)
    return out


def _full_checks(ctx, rec, state_k, state_km1, gens) -> Dict[str, Verdict]:
    prob, cfg = ctx.prob, ctx.cfg
    p, beta = prob.p, cfg.beta
    rng = ctx.rng
    lam = state_km1.lam
    out = {}

    # nonsmooth blocks: x_i^k must re-solve the subproblem rebuilt from (lambda_hat, R_i)
    worst = 0.0
    for i, blk in enumerate(prob.blocks):
        if blk.f.smooth:
            continue
        M, gen = ctx.mats[i], gens[i]
        xi, xi0 = state_k.x[i], state_km1.x[i]
        quad = beta * ctx.gram[i][i]
        H = quad + gen.hessian()
        ell = -M.T @ rec.lambda_hat + rec.R[i] - H @ xi
        inst = SubproblemInstance(i, ell + gen.hessian() @ xi0, quad, xi0, gen, blk.f, M, beta, lam, np.zeros(prob.d))
        z = solve_block(inst, cfg.inner_tol, cfg.inner_max_iter, ctx.resolve_cache).x_new
        worst = max(worst, float(_norm(z - xi)))
    prev_inc = rec.checks.get("inclusion", Verdict(True, 0.0))
    out["inclusion"] = Verdict(prev_inc.holds and worst <= 1e-9, min(prev_inc.margin, -worst))

    # affine increment, at (x^k, x^{k-1}) and at one random pair in the domains
    pairs = [(state_k.x, state_km1.x)]
    pairs.append(
        (
            [blk.f.sample_domain(rng, center=xi, scale=1.0) for blk, xi in zip(prob.blocks, state_k.x)],
            [blk.f.sample_domain(rng, center=xi, scale=1.0) for blk, xi in zip(prob.blocks, state_km1.x)],
        )
    )
    f0, A0 = ctx.parts(state_km1.x)
    f1, A1 = ctx.parts(state_k.x)
    known = {id(state_k.x): (f1, A1), id(state_km1.x): (f0, A0)}
    worst, scale = 0.0, 1.0
    for y, y0 in pairs:
        fy, Ay = known.get(id(y)) or ctx.parts(y)
        fy0, Ay0 = known.get(id(y0)) or ctx.parts(y0)
        dy = [a - b for a, b in zip(Ay, Ay0)]
        mix = lambda head, i, tail_from: (
            head[0][:i] + [tail_from[0][i]] + fy0[i + 1 :],
            head[1][:i] + [tail_from[1][i]] + Ay0[i + 1 :],
        )
        bot0 = ctx.L_parts(fy0, Ay0, lam)
        for i in range(1, p):
            top = ctx.L_parts(*mix((fy, Ay), i, (fy, Ay)), lam)
            top0 = ctx.L_parts(*mix((fy, Ay), i, (fy0, Ay0)), lam)
            bot = ctx.L_parts(*mix((fy0, Ay0), i, (fy, Ay)), lam)
            inc = beta * sum(float(dy[i] @ dy[j]) for j in range(i))
            worst = max(worst, abs((top - top0) - (bot - bot0 + inc)))
            scale = max(scale, abs(top), abs(top0), abs(bot), abs(bot0))
    out["affine"] = _ident(worst, scale)

    # per-block descent certificate and objective equivalence
    base = ctx.L_parts(f0, A0, lam)
    m = cfg.m
    ok, margin_min = True, np.inf
    for i in range(p):
        fm, Am = list(f0), list(A0)
        fm[i], Am[i] = f1[i], A1[i]
        val = ctx.L_parts(fm, Am, lam) - base
        v = _ineq(val, -m[i] / 2.0 * rec.norm_dx[i] ** 2, max(abs(base), abs(val)), tol=BLOCK_DESCENT_TOL)
        ok &= v.holds
        margin_min = min(margin_min, v.margin)
    out["block_descent"] = Verdict(ok, float(margin_min))

    if ctx.equivalence_samples > 0:
        insts = assemble_instances(prob, cfg, state_km1.x, lam, k=state_k.k)
        worst, scale = 0.0, 1.0
        for i, inst in enumerate(insts):
            z0 = state_km1.x[i]
            ref_inst = inst.objective(z0)
            for _ in range(ctx.equivalence_samples):
                z = prob.blocks[i].f.sample_domain(rng, center=state_k.x[i], scale=1.0)
                mixed = list(state_km1.x)
                mixed[i] = z
                direct = ctx.L(mixed, lam) + inst.generator.distance(z, z0) - base
                via = inst.objective(z) - ref_inst
                worst = max(worst, abs(direct - via))
                scale = max(scale, abs(direct), abs(base))
        out["equivalence"] = _ident(worst, scale, tol=EQUIVALENCE_TOL)
    return out


@dataclass
class RateCertificate:
    """Rate bounds evaluated along a trace.

    ``R_bounds[k-1, i]`` and ``feas_bounds[k-1]`` are the bounds valid at
    horizon ``k``; ``witnessed_j[k-1]`` is the iteration ``j <= k`` that
    minimizes the weighted displacement
    ``sum_i delta_i (|dx_i^j|^2 + |dx_i^{j-1}|^2) + delta_lambda |dlambda^j|^2``,
    at which all bounds must hold simultaneously.
    """

    delta_L0: float
    ks: np.ndarray
    R_bounds: np.ndarray
    feas_bounds: np.ndarray
    witnessed_j: np.ndarray
    witness_margin: np.ndarray
    best_R: np.ndarray
    best_feas: np.ndarray
    best_margin: np.ndarray
    displacement_sum: float
    displacement_bound: float
    rate_constant: float
    sqrt_k_best_max: np.ndarray

    @property
    def min_margin(self) -> float:
        return float(min(self.witness_margin.min(), self.best_margin.min(), self.displacement_bound - self.displacement_sum))

    @property
    def holds(self) -> bool:
        return bool(
            np.all(self.witness_margin >= 0)
            and np.all(self.best_margin >= 0)
            and self.displacement_sum <= self.displacement_bound * (1 + 1e-12)
            and self.delta_L0 >= 0
        )


def rate_certificate(stat_res, feas, norm_dx, norm_dlambda, constants: RateConstants) -> RateCertificate:
    """Evaluate the rate bounds for every horizon ``k`` of a trace.

    Args:
        stat_res: ``(K, p)`` residuals ``|R_i^j|`` for ``j = 1..K``.
        feas: ``(K,)`` feasibility residuals for ``j = 1..K``.
        norm_dx: ``(K+1, p)`` displacement norms for ``j = 0..K`` (row 0
            holds the seed convention).
        norm_dlambda: ``(K+1,)`` multiplier displacement norms, ``j = 0..K``.

    Raises:
        UncertifiedRun: when the constants do not certify the run.
    """
    if not constants.certified or constants.delta_lambda is None:
        raise UncertifiedRun("constants are not certified (some delta_i <= 0 or practical mode)")
    stat_res = np.asarray(stat_res, dtype=float)
    feas = np.asarray(feas, dtype=float)
    ndx = np.asarray(norm_dx, dtype=float)
    ndl = np.asarray(norm_dlambda, dtype=float)
    K, p = stat_res.shape
    if K < 1:
        raise ValueError("trace must contain at least one iteration")
    delta = np.asarray(constants.delta)
    dl = constants.delta_lambda
    dL0 = constants.delta_L0
    beta, theta = constants.beta, constants.theta
    factors = np.asarray(constants.residual_factors)

    ks = np.arange(1, K + 1)
    base = np.sqrt(2.0 * max(dL0, 0.0) / ks)
    R_bounds = factors[None, :] * (base / np.sqrt(delta.min()))[:, None]
    feas_bounds = base / np.sqrt(dl) / (beta * theta)

    s = (delta[None, :] * (ndx[1:] ** 2 + ndx[:-1] ** 2)).sum(axis=1) + dl * ndl[1:] ** 2
    # running argmin of s over j <= k
    witnessed = np.zeros(K, dtype=int)
    best = 0
    for k in range(K):
        if s[k] < s[best]:
            best = k
        witnessed[k] = best
    wR = stat_res[witnessed]
    wF = feas[witnessed]
    wmargin = np.minimum((R_bounds - wR).min(axis=1), feas_bounds - wF)

    best_R = np.minimum.accumulate(stat_res, axis=0)
    best_F = np.minimum.accumulate(feas)
    bmargin = np.minimum((R_bounds - best_R).min(axis=1), feas_bounds - best_F)

    # sqrt(k) * best max-residual against the k-independent rate constant
    const = max(float(factors.max()) * np.sqrt(2 * max(dL0, 0) / delta.min()), np.sqrt(2 * max(dL0, 0) / dl) / (beta * theta))
    best_max = np.minimum.accumulate(np.maximum(stat_res.max(axis=1), feas))
    return RateCertificate(
        delta_L0=dL0,
        ks=ks,
        R_bounds=R_bounds,
        feas_bounds=feas_bounds,
        witnessed_j=witnessed + 1,
        witness_margin=wmargin,
        best_R=best_R,
        best_feas=best_F,
        best_margin=bmargin,
        displacement_sum=float(s.sum()),
        displacement_bound=2.0 * dL0,
        rate_constant=const,
        sqrt_k_best_max=np.sqrt(ks) * best_max,
    )
