"""Exact solution of the per-block proximal augmented Lagrangian subproblem.

For block ``i`` at iteration ``k`` the subproblem is

    min_x  f_i(x) + <g, x> + 0.5 x^T (beta A_i^T A_i) x + dw_i(x; x_i^{k-1})

where ``g = -A_i^T lam + beta A_i^T c`` collects the frozen neighbours,
``c = sum_{j != i} A_j x_j^{k-1} - b``. With a quadratic generator of
Hessian ``H_w`` the smooth part is ``0.5 x^T H x + <lin, x>`` with
``H = beta A_i^T A_i + H_w`` and ``lin = g - H_w x_i^{k-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .bregman import BregmanGenerator, CancelCoupling
from .errors import DimensionMismatch, InnerSolverFailure, NoClosedForm, SingularSystem
from .functions import BlockFunction, FiniteSetIndicator

__all__ = ["SubproblemInstance", "SubproblemSolution", "assemble_instances", "solve_block", "BlockCache"]

EXACTNESS_TOL = 1e-9


@dataclass
class SubproblemInstance:
    """Data of one block subproblem, frozen at iteration ``k-1``.

    ``block_index`` is 0-based. ``quad_coupling`` is the matrix
    ``beta A_i^T A_i``.
    """

    block_index: int
    g_lin: np.ndarray
    quad_coupling: np.ndarray
    base_point: np.ndarray
    generator: BregmanGenerator
    f: BlockFunction
    A: np.ndarray
    beta: float
    lam: np.ndarray
    c: np.ndarray

    def objective(self, x) -> float:
        """Subproblem objective; differs from ``L_beta + dw`` by a constant."""
        x = np.asarray(x, dtype=float)
        return (
            self.f.value(x)
            + float(self.g_lin @ x)
            + 0.5 * float(x @ (self.quad_coupling @ x))
            + self.generator.distance(x, self.base_point)
        )


@dataclass
class SubproblemSolution:
    x_new: np.ndarray
    optimality_residual: float
    solver_used: str


def assemble_instances(prob, cfg, x_prev, lam_prev, k: int = 1, couplings=None) -> List[SubproblemInstance]:
    """Build the ``p`` mutually independent subproblems from one snapshot.

    Each instance only reads ``x_prev`` and ``lam_prev`` (iteration
    ``k-1``), and owns copies of them.
    """
    x_prev = prob.check_point(x_prev)
    lam_prev = np.array(lam_prev, dtype=float)
    if lam_prev.shape != (prob.d,):
        raise DimensionMismatch(f"lambda must have length {prob.d}, got {lam_prev.shape}")
    beta = cfg.beta
    mats = [blk.A.to_dense() for blk in prob.blocks]
    Ax = [M @ xi for M, xi in zip(mats, x_prev)]
    r = np.sum(Ax, axis=0) - prob.b
    out = []
    for i, (blk, M) in enumerate(zip(prob.blocks, mats)):
        c = r - Ax[i]
        g = M.T @ (beta * c - lam_prev)
        quad = couplings[i] if couplings is not None else beta * (M.T @ M)
        out.append(
            SubproblemInstance(
                block_index=i,
                g_lin=g,
                quad_coupling=quad,
                base_point=x_prev[i].copy(),
                generator=cfg.generator(i, k),
                f=blk.f,
                A=M,
                beta=beta,
                lam=lam_prev.copy(),
                c=c,
            )
        )
    return out


class BlockCache:
    """Per-block factorizations reused while a block's generator is unchanged."""

    def __init__(self):
        self._store: Dict[tuple, tuple] = {}

    def get(self, inst: SubproblemInstance):
        key = (inst.block_index, id(inst.generator), id(inst.f))
        hit = self._store.get(key)
        if hit is None or hit[0] is not inst.generator:
            hit = (inst.generator, _plan(inst))
            self._store[key] = hit
        return hit[1]


def _scalar_hessian(inst: SubproblemInstance, H: np.ndarray) -> Optional[float]:
    gen = inst.generator
    if (
        isinstance(gen, CancelCoupling)
        and gen.beta == inst.beta
        and gen.A.shape == inst.A.shape
        and np.array_equal(gen.A, inst.A)
    ):
        return gen.tau
    scale = max(1.0, float(np.abs(H).max()))
    d = np.diag(H)
    if np.abs(H - np.diag(d)).max() <= 1e-12 * scale and np.ptp(d) <= 1e-12 * scale:
        return float(d.mean())
    return None


def _plan(inst: SubproblemInstance) -> tuple:
    gen, f = inst.generator, inst.f
    if not gen.quadratic:
        raise NoClosedForm(f"block {inst.block_index + 1}: non-quadratic generator {gen.kind!r}")
    Hw = gen.hessian()
    H = inst.quad_coupling + Hw
    if f.kind == "quadratic":
        K = f.Q + H
        try:
            factor = scipy.linalg.cho_factor(K)
        except np.linalg.LinAlgError:
            raise SingularSystem(
                f"block {inst.block_index + 1}: Q + beta A^T A + H_w is not positive definite; raise m_i"
            ) from None
        return ("cholesky", Hw, K, factor)
    if f.smooth:
        return ("inner", Hw, H)
    if isinstance(f, FiniteSetIndicator):
        return ("enumeration", Hw, H)
    tau = _scalar_hessian(inst, H)
    if tau is not None:
        return ("prox", Hw, tau)
    scale = max(1.0, float(np.abs(H).max()))
    if f.separable and np.abs(H - np.diag(np.diag(H))).max() <= 1e-12 * scale:
        return ("separable-prox", Hw, np.diag(H).copy())
    raise NoClosedForm(
        f"block {inst.block_index + 1}: {f.kind} with a non-diagonal total Hessian; use a cancel_coupling generator"
    )


def solve_block(
    inst: SubproblemInstance,
    inner_tol: float = 1e-10,
    inner_max_iter: int = 200,
    cache: Optional[BlockCache] = None,
) -> SubproblemSolution:
    """Global minimizer of the block subproblem.

    Raises:
        SingularSystem: quadratic block whose total Hessian is indefinite.
        NoClosedForm: nonsmooth block whose total Hessian is not diagonal.
        InnerSolverFailure: smooth custom block not solved to ``inner_tol``.
    """
    plan = cache.get(inst) if cache is not None else _plan(inst)
    tag, Hw = plan[0], plan[1]
    lin = inst.g_lin - Hw @ inst.base_point
    f = inst.f

    if tag == "cholesky":
        _, _, K, factor = plan
        rhs = -(f.q + lin)
        x = scipy.linalg.cho_solve(factor, rhs)
        res = float(np.linalg.norm(K @ x - rhs))
        return SubproblemSolution(x, res, tag)
    if tag == "prox":
        tau = plan[2]
        return SubproblemSolution(f.prox(-lin / tau, 1.0 / tau), 0.0, tag)
    if tag == "separable-prox":
        h = plan[2]
        return SubproblemSolution(f.prox(-lin / h, 1.0 / h), 0.0, tag)
    if tag == "enumeration":
        return SubproblemSolution(f.argmin_quadratic(plan[2], lin), 0.0, tag)

    H = plan[2]

    def fun(x):
        Hx = H @ x
        return f.value(x) + 0.5 * float(x @ Hx) + float(lin @ x), f.gradient(x) + Hx + lin

    res = scipy.optimize.minimize(
        fun,
        inst.base_point,
        jac=True,
        method="BFGS",
        options={"gtol": inner_tol / np.sqrt(f.dim), "maxiter": inner_max_iter},
    )
    gnorm = float(np.linalg.norm(fun(res.x)[1]))
    if gnorm > inner_tol:
        raise InnerSolverFailure(
            f"block {inst.block_index + 1}: inner solver stopped at gradient norm {gnorm:.3e} "
            f"after {res.nit} iterations (tolerance {inner_tol:.1e})"
        )
    return SubproblemSolution(res.x, gnorm, "inner")
