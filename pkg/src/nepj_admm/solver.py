"""Jacobi-type non-Euclidean proximal ADMM.

Each iteration solves all ``p`` block subproblems against the *same*
snapshot ``(x^{k-1}, lambda^{k-1})``, commits the new blocks together, and
relaxes the multiplier:

    lambda^k = lambda^{k-1} - theta * beta * (sum_i A_i x_i^k - b).
"""

from __future__ import annotations

import logging
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .diagnostics import DiagnosticsContext, IterationRecord, initial_record, record_iteration
from .errors import InfeasibleParams, NEPJError
from .params import RateConstants, SolverConfig, rate_constants
from .problem import Problem
from .subproblem import BlockCache, assemble_instances, solve_block

__all__ = ["SolverState", "BestIterate", "RunResult", "Trace", "initial_state", "step", "run", "JacobiADMM"]

logger = logging.getLogger(__name__)


@dataclass
class SolverState:
    """Iterate ``k`` with displacements from iterate ``k-1``.

    At ``k = 0`` the displacements follow the seed conventions
    ``dlambda^0 = 0``, ``dx_i^0 = 0`` for ``i < p`` and
    ``dx_p^0 = R_p^0 / M_p``.
    """

    k: int
    x: List[np.ndarray]
    lam: np.ndarray
    x_prev: Optional[List[np.ndarray]]
    lam_prev: Optional[np.ndarray]
    delta_x: List[np.ndarray]
    delta_lambda: np.ndarray
    residual: np.ndarray


def initial_state(prob: Problem, cfg: SolverConfig, x0=None, lambda0=None) -> SolverState:
    x0 = prob.default_x0() if x0 is None else prob.check_point(x0)
    lam0 = np.zeros(prob.d) if lambda0 is None else np.array(lambda0, dtype=float).reshape(prob.d)
    Rp0 = prob.last.A.apply_adjoint(lam0) - prob.last.f.gradient(x0[-1])
    dx = [np.zeros_like(xi) for xi in x0[:-1]] + [Rp0 / cfg.moduli[-1][1]]
    return SolverState(0, [xi.copy() for xi in x0], lam0, None, None, dx, np.zeros(prob.d), prob.residual(x0))


def step(
    prob: Problem,
    cfg: SolverConfig,
    state: SolverState,
    cache: Optional[BlockCache] = None,
    executor: Optional[Executor] = None,
    couplings=None,
) -> SolverState:
    """One Jacobi sweep plus the relaxed multiplier update.

    All subproblems are built from ``state`` before any is solved, so they
    may run concurrently on ``executor``. A failing block raises and nothing
    is committed.
    """
    k = state.k + 1
    insts = assemble_instances(prob, cfg, state.x, state.lam, k=k, couplings=couplings)
    solve = lambda inst: solve_block(inst, cfg.inner_tol, cfg.inner_max_iter, cache)
    if executor is None:
        sols = [solve(inst) for inst in insts]
    else:
        sols = list(executor.map(solve, insts))
    x_new = [s.x_new for s in sols]
    r = prob.residual(x_new)
    lam_new = state.lam - cfg.theta * cfg.beta * r
    return SolverState(
        k=k,
        x=x_new,
        lam=lam_new,
        x_prev=state.x,
        lam_prev=state.lam,
        delta_x=[a - b for a, b in zip(x_new, state.x)],
        delta_lambda=lam_new - state.lam,
        residual=r,
    )


@dataclass
class BestIterate:
    k: int
    x: List[np.ndarray]
    lambda_hat: np.ndarray
    residuals: dict

    @property
    def max_residual(self) -> float:
        return max(self.residuals["feas"], max(self.residuals["stat_res"]))


@dataclass
class Trace:
    """Append-only store of iteration records (``records[k]`` is iterate ``k``)."""

    constants: RateConstants
    records: List[IterationRecord] = field(default_factory=list)

    def append(self, rec: IterationRecord):
        if self.records and rec.k != self.records[-1].k + 1:
            raise ValueError("records must be appended in order")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    @property
    def iterations(self) -> List[IterationRecord]:
        return self.records[1:]

    def arrays(self):
        """``(stat_res, feas, norm_dx, norm_dlambda)`` for the certificate."""
        it = self.iterations
        stat = np.array([r.stat_res for r in it])
        feas = np.array([r.feas for r in it])
        ndx = np.array([r.norm_dx for r in self.records])
        ndl = np.array([r.norm_dlambda for r in self.records])
        return stat, feas, ndx, ndl

    def failures(self, include_advisory: bool = False):
        """``[(k, check_name), ...]`` of every failed check."""
        return [(r.k, n) for r in self.records for n in r.failed(include_advisory)]


@dataclass
class RunResult:
    """``status`` is one of ``converged``, ``max_iter``,
    ``infeasible_params``, ``subproblem_failure`` or ``diverged``."""

    status: str
    k: int
    best_iterate: Optional[BestIterate]
    x: List[np.ndarray]
    lam: np.ndarray
    trace: Optional[Trace]
    constants: Optional[RateConstants]
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def run(
    prob: Problem,
    cfg: SolverConfig,
    x0=None,
    lambda0=None,
    n_jobs: int = 1,
    callback: Optional[Callable[[SolverState, IterationRecord], None]] = None,
    equivalence_samples: int = 20,
    evidence=None,
) -> RunResult:
    """Iterate until the max residual is at most ``cfg.rho_tol`` or
    ``cfg.max_iter`` sweeps are done.

    The stopping residual is the max of the feasibility residual,
    ``|R_i^k|`` for ``i < p`` and ``|grad f_p(x_p^k) - A_p^T lambda_hat^k|``.
    ``n_jobs > 1`` solves the block subproblems on a thread pool.

    Raises:
        InfeasibleParams: certified mode with some ``delta_i <= 0`` and
            ``check_level == "full"`` (otherwise reported in the status).
    """
    state = initial_state(prob, cfg, x0, lambda0)
    constants = rate_constants(prob, cfg, state.x, state.lam, evidence=evidence)
    if cfg.mode == "certified" and not constants.certified:
        msg = f"certified mode needs every delta_i > 0, got min delta = {constants.min_delta:.6g}"
        if cfg.check_level == "full":
            raise InfeasibleParams(msg)
        return RunResult("infeasible_params", 0, None, state.x, state.lam, None, constants, msg)

    ctx = DiagnosticsContext(prob, cfg, constants, equivalence_samples=equivalence_samples)
    trace = Trace(constants)
    trace.append(initial_record(ctx, state))
    cache = BlockCache()
    couplings = [cfg.beta * g[i] for i, g in enumerate(ctx.gram)]
    executor = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    best: Optional[BestIterate] = None
    status, message = "max_iter", ""
    try:
        while state.k < cfg.max_iter:
            prev_state = state
            try:
                state = step(prob, cfg, state, cache=cache, executor=executor, couplings=couplings)
            except NEPJError as exc:
                status, message = "subproblem_failure", str(exc)
                state = prev_state
                break
            if not (np.isfinite(state.lam).all() and all(np.isfinite(xi).all() for xi in state.x)):
                status, message = "diverged", f"non-finite iterate at k={state.k}"
                state = prev_state
                break
            rec = record_iteration(ctx, state, prev_state, trace.records[-1])
            trace.append(rec)
            if best is None or rec.max_residual < best.max_residual:
                best = BestIterate(
                    rec.k,
                    [xi.copy() for xi in state.x],
                    rec.lambda_hat.copy(),
                    {"feas": rec.feas, "stat_res": list(rec.stat_res)},
                )
            if callback is not None:
                callback(state, rec)
            if rec.max_residual <= cfg.rho_tol:
                status = "converged"
                break
    finally:
        if executor is not None:
            executor.shutdown()
    logger.info("%s after %d iterations", status, state.k)
    return RunResult(status, state.k, best, state.x, state.lam, trace, constants, message)


class JacobiADMM:
    """Object wrapper around :func:`run` that keeps the last result.

    Example:
        >>> solver = JacobiADMM(cfg)
        >>> result = solver.solve(problem)
        >>> solver.x_
    """

    def __init__(self, config: SolverConfig, n_jobs: int = 1):
        self.config = config
        self.n_jobs = n_jobs

    def solve(self, prob: Problem, x0=None, lambda0=None, **kwargs) -> RunResult:
        self.result_ = run(prob, self.config, x0, lambda0, n_jobs=self.n_jobs, **kwargs)
        best = self.result_.best_iterate
        self.x_ = best.x if best is not None else self.result_.x
        self.lambda_ = best.lambda_hat if best is not None else self.result_.lam
        return self.result_
