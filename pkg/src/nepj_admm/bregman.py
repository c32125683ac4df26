"""Distance generating functions and their Bregman distances.

A generator ``w`` belongs to the class with moduli ``(m, M)`` when

    w(z') - w(z) - <grad w(z), z' - z>  >=  m/2 ||z' - z||^2
    ||grad w(z) - grad w(z')||          <=  M ||z - z'||

for all ``z, z'``. The shipped generators are quadratic,
``w(z) = 0.5 z^T H z``, which is what the exact subproblem solver relies on.
A non-quadratic generator can subclass :class:`BregmanGenerator` and
override :meth:`~BregmanGenerator.value` and :meth:`~BregmanGenerator.grad`;
it is then usable by :func:`bregman_distance` and :func:`certify_moduli`
but not by the closed-form subproblem paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import DimensionMismatch, InvalidGenerator
from .linalg import as_linop, op_norm

__all__ = [
    "BregmanGenerator",
    "Euclidean",
    "Diagonal",
    "CancelCoupling",
    "BregmanEval",
    "bregman_distance",
    "certify_moduli",
    "generator_from_dict",
]


class BregmanGenerator:
    kind = "abstract"
    quadratic = False

    def __init__(self, dim: int, m: float, M: float):
        if not (0 < m <= M):
            raise InvalidGenerator(f"moduli must satisfy 0 < m <= M, got m={m}, M={M}")
        self.dim = int(dim)
        self.m = float(m)
        self.M = float(M)

    def value(self, z) -> float:
        raise NotImplementedError

    def grad(self, z) -> np.ndarray:
        raise NotImplementedError

    def distance(self, z_new, z_base) -> float:
        return self.value(z_new) - self.value(z_base) - float(self.grad(z_base) @ (z_new - z_base))

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise DimensionMismatch(f"expected vector of length {self.dim}, got {z.shape}")
        return z


class _QuadraticGenerator(BregmanGenerator):
    quadratic = True
    H: np.ndarray

    def value(self, z):
        z = self._check(z)
        return 0.5 * float(z @ (self.H @ z))

    def grad(self, z):
        return self.H @ self._check(z)

    def distance(self, z_new, z_base):
        # exact for quadratics, and free of the cancellation in the definition
        dz = self._check(z_new) - self._check(z_base)
        return 0.5 * float(dz @ (self.H @ dz))

    def hessian(self) -> np.ndarray:
        return self.H


class Euclidean(_QuadraticGenerator):
    """``w(z) = (m/2) ||z||^2``; here ``m = M``."""

    kind = "euclidean"

    def __init__(self, m: float, dim: int):
        super().__init__(dim, m, m)
        self.H = m * np.eye(dim)

    def grad(self, z):
        return self.m * self._check(z)

    def to_dict(self):
        return {"kind": self.kind, "m": self.m}


class Diagonal(_QuadraticGenerator):
    """``w(z) = 0.5 sum_j weights_j z_j^2``."""

    kind = "diagonal"

    def __init__(self, weights):
        weights = np.array(weights, dtype=float, ndmin=1)
        if np.any(weights <= 0):
            raise InvalidGenerator("diagonal weights must be positive")
        super().__init__(weights.shape[0], weights.min(), weights.max())
        self.weights = weights
        self.H = np.diag(weights)

    def grad(self, z):
        return self.weights * self._check(z)

    def to_dict(self):
        return {"kind": self.kind, "weights": self.weights.tolist()}


class CancelCoupling(_QuadraticGenerator):
    """``w(z) = (tau/2)||z||^2 - (beta/2)||A z||^2``.

    Added to the block subproblem, this generator cancels the coupling
    Hessian ``beta A^T A`` exactly, so the subproblem becomes a plain prox
    step with weight ``1/tau``. Requires ``tau > beta ||A||^2``.
    """

    kind = "cancel_coupling"

    def __init__(self, tau: float, A, beta: float):
        A = as_linop(A).to_dense()
        self.A = A
        self.beta = float(beta)
        self.tau = float(tau)
        self.norm_sq = op_norm(A) ** 2
        m = self.tau - self.beta * self.norm_sq
        if not (beta > 0 and m > 0):
            raise InvalidGenerator(
                f"cancel_coupling needs tau > beta*||A||^2 = {self.beta * self.norm_sq:.6g}, got tau={tau}"
            )
        super().__init__(A.shape[1], m, self.tau)
        self.H = self.tau * np.eye(self.dim) - self.beta * (A.T @ A)

    @classmethod
    def with_margin(cls, A, beta: float, margin: float = 1.0) -> "CancelCoupling":
        """``tau = beta ||A||^2 (1 + margin)``, so ``m = margin * beta ||A||^2``."""
        ns = op_norm(A) ** 2
        return cls(beta * ns * (1.0 + margin), A, beta)

    @classmethod
    def with_modulus(cls, A, beta: float, m: float) -> "CancelCoupling":
        """Generator whose strong-convexity modulus is exactly ``m``."""
        return cls(m + beta * op_norm(A) ** 2, A, beta)

    def to_dict(self):
        return {"kind": self.kind, "tau": self.tau}


@dataclass(frozen=True)
class BregmanEval:
    """Value of ``dw(z_new; z_base)`` and its gradient in ``z_new``."""

    value: float
    grad_at_new: np.ndarray


def bregman_distance(w: BregmanGenerator, z_new, z_base) -> BregmanEval:
    z_new = w._check(z_new)
    z_base = w._check(z_base)
    return BregmanEval(w.distance(z_new, z_base), w.grad(z_new) - w.grad(z_base))


def certify_moduli(w: BregmanGenerator, samples: int = 1000, rng_seed: int = 0) -> Tuple[float, float]:
    """Empirical ``(m, M)`` of a generator over random pairs.

    Returns the smallest observed ``2 dw(z'; z) / ||z' - z||^2`` and the
    largest observed ``||grad w(z') - grad w(z)|| / ||z' - z||``. For a
    valid generator these bracket the declared moduli from inside.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(rng_seed)
    m_emp, M_emp = np.inf, 0.0
    for _ in range(samples):
        z = rng.standard_normal(w.dim) * 3.0
        zp = z + rng.standard_normal(w.dim) * 10.0 ** rng.uniform(-2, 1)
        dz2 = float((zp - z) @ (zp - z))
        if dz2 == 0.0:
            continue
        ev = bregman_distance(w, zp, z)
        m_emp = min(m_emp, 2.0 * ev.value / dz2)
        M_emp = max(M_emp, float(np.linalg.norm(ev.grad_at_new)) / np.sqrt(dz2))
    return float(m_emp), float(M_emp)


GeneratorFactory = Callable[[int, int], BregmanGenerator]


def generator_from_dict(spec: dict, dim: int, A=None, beta: Optional[float] = None) -> BregmanGenerator:
    """Build a generator from a CLI/JSON ``{"kind": ...}`` description."""
    kind = spec.get("kind")
    if kind == "euclidean":
        return Euclidean(float(spec["m"]), dim)
    if kind == "diagonal":
        w = spec["weights"]
        w = [float(w)] * dim if np.isscalar(w) else w
        return Diagonal(w)
    if kind == "cancel_coupling":
        if A is None or beta is None:
            raise InvalidGenerator("cancel_coupling needs the block matrix and beta")
        if "tau" in spec:
            return CancelCoupling(float(spec["tau"]), A, beta)
        if "m" in spec:
            return CancelCoupling.with_modulus(A, beta, float(spec["m"]))
        return CancelCoupling.with_margin(A, beta, float(spec.get("margin", 1.0)))
    raise InvalidGenerator(f"unknown generator kind {kind!r}")
