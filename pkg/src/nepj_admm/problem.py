"""Multi-block linearly constrained programs and assumption checks.

A :class:`Problem` is ``min sum_i f_i(x_i)  s.t.  sum_i A_i x_i = b`` with
``p >= 2`` blocks, the last of which must be smooth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidProblem, ZeroOperator
from .functions import BlockFunction
from .linalg import LinOp, as_linop, range_contains, spectral_summary

__all__ = [
    "Block",
    "Problem",
    "ValidationReport",
    "evaluate_objective",
    "feasibility_residual",
    "augmented_lagrangian",
    "validate",
]


class Block(NamedTuple):
    f: BlockFunction
    A: LinOp


class Problem:
    """Immutable container for the block functions and constraint data.

    Args:
        blocks: sequence of ``(f_i, A_i)`` pairs, ``A_i`` anything accepted
            by :func:`~nepj_admm.linalg.as_linop`.
        b: right-hand side of the coupling constraint.
        lower_bound_hint: optional finite lower bound on the penalized
            objective infimum, used only by certificates.
    """

    def __init__(self, blocks: Sequence, b, lower_bound_hint: Optional[float] = None):
        blocks = [Block(f, as_linop(A)) for f, A in blocks]
        if len(blocks) < 2:
            raise InvalidProblem(f"need at least two blocks, got {len(blocks)}")
        b = np.array(b, dtype=float, ndmin=1)
        if b.ndim != 1:
            raise DimensionMismatch(f"b must be a vector, got shape {b.shape}")
        for i, (f, A) in enumerate(blocks):
            if A.rows != b.shape[0]:
                raise DimensionMismatch(
                    f"block {i + 1}: A has {A.rows} rows but b has length {b.shape[0]}"
                )
            if A.cols != f.dim:
                raise DimensionMismatch(
                    f"block {i + 1}: A has {A.cols} columns but f has dimension {f.dim}"
                )
        if not blocks[-1].f.smooth:
            raise InvalidProblem(
                f"last block must be smooth and real-valued, got kind {blocks[-1].f.kind!r}"
            )
        b.setflags(write=False)
        self.blocks: List[Block] = blocks
        self.b = b
        self.lower_bound_hint = None if lower_bound_hint is None else float(lower_bound_hint)

    @property
    def p(self) -> int:
        return len(self.blocks)

    @property
    def d(self) -> int:
        return self.b.shape[0]

    @property
    def dims(self) -> List[int]:
        return [blk.f.dim for blk in self.blocks]

    @property
    def last(self) -> Block:
        return self.blocks[-1]

    def check_point(self, x) -> List[np.ndarray]:
        if len(x) != self.p:
            raise DimensionMismatch(f"expected {self.p} blocks, got {len(x)}")
        out = []
        for i, (xi, n) in enumerate(zip(x, self.dims)):
            xi = np.array(xi, dtype=float, ndmin=1)
            if xi.shape != (n,):
                raise DimensionMismatch(f"block {i + 1}: expected length {n}, got {xi.shape}")
            out.append(xi)
        return out

    def residual(self, x) -> np.ndarray:
        """``sum_i A_i x_i - b``."""
        x = self.check_point(x)
        r = -self.b.copy()
        for (f, A), xi in zip(self.blocks, x):
            r += A.apply(xi)
        return r

    def default_x0(self) -> List[np.ndarray]:
        """Nearest domain point to the origin, block by block."""
        return [blk.f.project(np.zeros(blk.f.dim)) for blk in self.blocks]

    def permuted(self, order: Sequence[int]) -> "Problem":
        """Same problem with blocks reordered; the last block must stay smooth."""
        return Problem([self.blocks[i] for i in order], self.b, self.lower_bound_hint)


def evaluate_objective(prob: Problem, x) -> float:
    """``sum_i f_i(x_i)``; ``+inf`` outside an indicator's domain."""
    x = prob.check_point(x)
    total = 0.0
    for blk, xi in zip(prob.blocks, x):
        total += blk.f.value(xi)
    return total


def feasibility_residual(prob: Problem, x) -> float:
    """Euclidean norm of ``sum_i A_i x_i - b``."""
    return float(np.linalg.norm(prob.residual(x)))


def augmented_lagrangian(prob: Problem, x, lam, beta: float) -> float:
    """``sum f_i(x_i) - <lam, r> + beta/2 ||r||^2`` with ``r = sum A_i x_i - b``."""
    r = prob.residual(x)
    lam = np.asarray(lam, dtype=float)
    return evaluate_objective(prob, x) - float(lam @ r) + 0.5 * beta * float(r @ r)


@dataclass
class ValidationReport:
    """Evidence for the standing assumptions.

    ``a0_lsc``: lower semicontinuity; ``a1_range``: ``Im(A_p)`` contains
    ``b`` and every ``Im(A_i)``; ``a2_smooth_last``: the last block has a
    Lipschitz gradient; ``a3_lower_bound``: the penalized objective is
    bounded below.

    ``a0_lsc`` maps block index to ``"declared-by-kind"`` or
    ``"user-obligation"``; lower semicontinuity is never machine checked.
    ``a3_lower_bound`` is ``("user_hint", v)``, ``("sampled_min", v)`` or
    ``("unknown", None)``.
    """

    a0_lsc: dict
    a1_range: bool
    a1_worst_residual: float
    a2_smooth_last: bool
    a2_lipschitz_estimate: float
    a2_declared: float
    a3_lower_bound: tuple
    warnings: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.a1_range and self.a2_smooth_last

    def lines(self) -> List[str]:
        out = [
            f"a0_lsc: {self.a0_lsc}",
            f"a1_range: {self.a1_range} (worst relative residual {self.a1_worst_residual:.3e})",
            f"a2_smooth_last: {self.a2_smooth_last} "
            f"(empirical Lipschitz {self.a2_lipschitz_estimate:.6g}, declared {self.a2_declared:.6g})",
            f"a3_lower_bound: {self.a3_lower_bound[0]}"
            + ("" if self.a3_lower_bound[1] is None else f" = {self.a3_lower_bound[1]:.6g}"),
        ]
        out += [f"warning: {w}" for w in self.warnings]
        return out


def _relative_ls_residual(M: np.ndarray, v: np.ndarray) -> float:
    x, *_ = np.linalg.lstsq(M, v, rcond=None)
    return float(np.linalg.norm(M @ x - v)) / max(1.0, float(np.linalg.norm(v)))


def validate(
    prob: Problem,
    tol: float = 1e-9,
    sample_budget: int = 200,
    beta: float = 1.0,
    rng_seed: int = 0,
) -> ValidationReport:
    """Check the range and smoothness conditions numerically and collect
    evidence for lower semicontinuity and the lower bound.

    Failures are reported in the returned object; nothing is raised for a
    structurally valid problem.
    """
    rng = np.random.default_rng(rng_seed)
    warnings: List[str] = []
    a0 = {
        i + 1: ("declared-by-kind" if blk.f.lsc_by_kind else "user-obligation")
        for i, blk in enumerate(prob.blocks)
    }

    Ap = prob.last.A.to_dense()
    worst = 0.0
    try:
        spectral_summary(Ap)
        a1 = range_contains(Ap, prob.b, tol)
        worst = _relative_ls_residual(Ap, prob.b)
        for i, blk in enumerate(prob.blocks[:-1]):
            Ai = blk.A.to_dense()
            for j in range(Ai.shape[1]):
                col = Ai[:, j]
                worst = max(worst, _relative_ls_residual(Ap, col))
                if not range_contains(Ap, col, tol):
                    if a1:
                        warnings.append(f"range: column {j + 1} of A_{i + 1} is outside Im(A_p)")
                    a1 = False
        if not range_contains(Ap, prob.b, tol):
            warnings.append("range: b is outside Im(A_p)")
    except ZeroOperator:
        a1 = False
        worst = np.inf
        warnings.append("range: A_p is the zero operator")

    fp = prob.last.f
    est = 0.0
    for _ in range(sample_budget):
        x = 3.0 * rng.standard_normal(fp.dim)
        y = x + rng.standard_normal(fp.dim) * 10.0 ** rng.uniform(-3, 1)
        dx = np.linalg.norm(x - y)
        if dx > 0:
            est = max(est, float(np.linalg.norm(fp.gradient(x) - fp.gradient(y)) / dx))
    declared = float(fp.lip_grad)
    a2 = fp.smooth and est <= declared * (1 + 1e-6) + 1e-12
    if not a2:
        warnings.append(f"smoothness: empirical Lipschitz {est:.6g} exceeds declared {declared:.6g}")

    if prob.lower_bound_hint is not None:
        a3 = ("user_hint", prob.lower_bound_hint)
    else:
        best = np.inf
        for _ in range(sample_budget):
            x = [blk.f.sample_domain(rng, scale=3.0) for blk in prob.blocks]
            r = prob.residual(x)
            best = min(best, evaluate_objective(prob, x) + 0.5 * beta * float(r @ r))
        a3 = ("sampled_min", float(best)) if np.isfinite(best) else ("unknown", None)
        warnings.append("lower bound: no lower-bound hint; sampled minimum is weak evidence only")

    return ValidationReport(a0, bool(a1), float(worst), bool(a2), est, declared, a3, warnings)
