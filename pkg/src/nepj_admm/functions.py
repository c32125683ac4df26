"""Block objective functions.

Every block function exposes ``value``; smooth kinds add ``gradient`` and
``lip_grad``; nonsmooth kinds add ``prox(v, tau)`` returning a minimizer of
``tau * f(z) + 0.5 * ||z - v||^2``. Separable kinds accept a vector ``tau``
(one weight per coordinate).
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, InvalidProblem

__all__ = [
    "BlockFunction",
    "Quadratic",
    "L1Norm",
    "BoxIndicator",
    "FiniteSetIndicator",
    "SmoothCustom",
    "ProxCustom",
    "function_from_dict",
]


class BlockFunction:
    kind: str = "abstract"
    smooth = False
    separable = False
    is_indicator = False
    # declared lower semicontinuity; custom kinds carry it as a user obligation
    lsc_by_kind = True

    def __init__(self, dim: int):
        if dim < 1:
            raise DimensionMismatch(f"block dimension must be positive, got {dim}")
        self.dim = int(dim)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"expected vector of length {self.dim}, got {x.shape}")
        return x

    def value(self, x) -> float:
        raise NotImplementedError

    def __call__(self, x) -> float:
        return self.value(x)

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError(f"{self.kind} has no gradient")

    def prox(self, v, tau) -> np.ndarray:
        raise NotImplementedError(f"{self.kind} has no prox")

    def project(self, v) -> np.ndarray:
        """Nearest point of the domain (identity for real-valued kinds)."""
        return np.array(v, dtype=float)

    def sample_domain(self, rng: np.random.Generator, center=None, scale=1.0) -> np.ndarray:
        c = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        return self.project(c + scale * rng.standard_normal(self.dim))

    def to_dict(self) -> dict:
        raise TypeError(f"{self.kind} functions are not serializable")


class Quadratic(BlockFunction):
    """``f(x) = 0.5 x^T Q x + q^T x + c0`` with symmetric ``Q``."""

    kind = "quadratic"
    smooth = True

    def __init__(self, Q, q=None, c0: float = 0.0):
        Q = np.array(Q, dtype=float, ndmin=2)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch(f"Q must be square, got {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise InvalidProblem("Q must be symmetric")
        super().__init__(Q.shape[0])
        self.Q = 0.5 * (Q + Q.T)
        self.q = np.zeros(self.dim) if q is None else np.array(q, dtype=float).reshape(self.dim)
        self.c0 = float(c0)
        eig = np.linalg.eigvalsh(self.Q)
        self.lip_grad = float(np.max(np.abs(eig)))
        self.min_eig = float(eig[0])

    def value(self, x):
        x = self._check(x)
        return float(0.5 * x @ (self.Q @ x) + self.q @ x + self.c0)

    def gradient(self, x):
        x = self._check(x)
        return self.Q @ x + self.q

    def prox(self, v, tau) -> np.ndarray:
        """``(I + tau Q)^{-1} (v - tau q)``; needs ``I + tau Q`` positive definite."""
        v = self._check(v)
        return np.linalg.solve(np.eye(self.dim) + tau * self.Q, v - tau * self.q)

    def to_dict(self):
        return {"kind": self.kind, "Q": self.Q.tolist(), "q": self.q.tolist(), "c0": self.c0}


class L1Norm(BlockFunction):
    """``f(x) = weight * ||x||_1``."""

    kind = "l1"
    separable = True

    def __init__(self, weight: float, dim: int):
        if not weight > 0:
            raise InvalidProblem(f"l1 weight must be positive, got {weight}")
        super().__init__(dim)
        self.weight = float(weight)

    def value(self, x):
        return self.weight * float(np.abs(self._check(x)).sum())

    def prox(self, v, tau):
        v = np.asarray(v, dtype=float)
        t = self.weight * np.asarray(tau, dtype=float)
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "weight": self.weight, "dim": self.dim}


class BoxIndicator(BlockFunction):
    """Indicator of ``{x : lo <= x <= hi}``; infinite bounds are allowed."""

    kind = "indicator_box"
    separable = True
    is_indicator = True

    def __init__(self, lo, hi):
        lo = np.array(lo, dtype=float, ndmin=1)
        hi = np.array(hi, dtype=float, ndmin=1)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch(f"box bounds differ in shape: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise InvalidProblem("empty box: lo > hi")
        super().__init__(lo.shape[0])
        self.lo, self.hi = lo, hi

    def value(self, x):
        x = self._check(x)
        return 0.0 if np.all((x >= self.lo) & (x <= self.hi)) else np.inf

    def prox(self, v, tau):
        return np.clip(np.asarray(v, dtype=float), self.lo, self.hi)

    def project(self, v):
        return np.clip(np.asarray(v, dtype=float), self.lo, self.hi)

    def to_dict(self):
        enc = lambda a: [None if not np.isfinite(t) else float(t) for t in a]
        return {"kind": self.kind, "lo": enc(self.lo), "hi": enc(self.hi)}


class FiniteSetIndicator(BlockFunction):
    """Indicator of a finite point set (a nonconvex, nonsmooth block).

    Points are stored in lexicographic order so that ties in any nearest
    point or enumeration query resolve to the lexicographically smallest.
    """

    kind = "indicator_finite_set"
    is_indicator = True

    def __init__(self, points):
        P = np.array(points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if P.ndim != 2 or P.shape[0] == 0:
            raise InvalidProblem("finite set needs at least one point")
        super().__init__(P.shape[1])
        order = np.lexsort(P.T[::-1])
        self.points = P[order]

    def value(self, x):
        x = self._check(x)
        return 0.0 if (self.points == x).all(axis=1).any() else np.inf

    def argmin_quadratic(self, H, g) -> np.ndarray:
        """Exact minimizer of ``0.5 z^T H z + g^T z`` over the point set."""
        P = self.points
        vals = 0.5 * np.einsum("ij,jk,ik->i", P, np.atleast_2d(H), P) + P @ g
        return P[int(np.argmin(vals))].copy()

    def prox(self, v, tau):
        v = np.asarray(v, dtype=float)
        d2 = ((self.points - v) ** 2).sum(axis=1)
        return self.points[int(np.argmin(d2))].copy()

    def project(self, v):
        return self.prox(v, 1.0)

    def sample_domain(self, rng, center=None, scale=1.0):
        return self.points[rng.integers(len(self.points))].copy()

    def to_dict(self):
        return {"kind": self.kind, "points": self.points.tolist()}


class SmoothCustom(BlockFunction):
    """User-supplied smooth function given by value and gradient oracles.

    The caller is responsible for lower semicontinuity and for ``lip_grad``
    being a valid Lipschitz constant of the gradient.
    """

    kind = "smooth_custom"
    smooth = True
    lsc_by_kind = False

    def __init__(self, value: Callable, gradient: Callable, lip_grad: float, dim: int):
        if not lip_grad > 0:
            raise InvalidProblem("lip_grad must be positive")
        super().__init__(dim)
        self._value, self._gradient = value, gradient
        self.lip_grad = float(lip_grad)

    def value(self, x):
        return float(self._value(self._check(x)))

    def gradient(self, x):
        return np.asarray(self._gradient(self._check(x)), dtype=float)


class ProxCustom(BlockFunction):
    """User-supplied nonsmooth function given by value and prox oracles."""

    kind = "prox_custom"
    lsc_by_kind = False

    def __init__(self, value: Callable, prox: Callable, dim: int, project: Optional[Callable] = None):
        super().__init__(dim)
        self._value, self._prox, self._project = value, prox, project

    def value(self, x):
        return float(self._value(self._check(x)))

    def prox(self, v, tau):
        return np.asarray(self._prox(np.asarray(v, dtype=float), float(tau)), dtype=float)

    def project(self, v):
        if self._project is None:
            return np.array(v, dtype=float)
        return np.asarray(self._project(np.asarray(v, dtype=float)), dtype=float)


def function_from_dict(spec: dict, dim: Optional[int] = None) -> BlockFunction:
    """Build a block function from its JSON description."""
    kind = spec.get("kind")
    if kind == "quadratic":
        return Quadratic(spec["Q"], spec.get("q"), spec.get("c0", 0.0))
    if kind == "l1":
        d = spec.get("dim", dim)
        if d is None:
            raise InvalidProblem("l1 block needs a dimension")
        return L1Norm(spec.get("weight", 1.0), int(d))
    if kind == "indicator_box":
        dec = lambda a, s: [s * np.inf if t is None else float(t) for t in a]
        return BoxIndicator(dec(spec["lo"], -1), dec(spec["hi"], 1))
    if kind == "indicator_finite_set":
        return FiniteSetIndicator(spec["points"])
    raise InvalidProblem(f"unknown or non-serializable function kind {kind!r}")
