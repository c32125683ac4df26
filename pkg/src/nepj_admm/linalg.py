"""Linear operators and the spectral quantities of the constraint matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, ZeroOperator

__all__ = [
    "LinOp",
    "as_linop",
    "SpectralSummary",
    "spectral_summary",
    "project_onto_range_adjoint",
    "range_contains",
    "op_norm",
]

DENSE_EIG_MAX_COLS = 512
DEFAULT_RANK_TOL = 1e-10


class LinOp:
    """A real linear map ``R^cols -> R^rows`` with its adjoint.

    Operators built from a matrix keep it in :attr:`dense`; operators built
    from callables materialize it lazily through :meth:`to_dense`.
    """

    def __init__(
        self,
        rows: int,
        cols: int,
        apply: Callable[[np.ndarray], np.ndarray],
        apply_adjoint: Callable[[np.ndarray], np.ndarray],
        dense: Optional[np.ndarray] = None,
    ):
        if rows < 1 or cols < 1:
            raise DimensionMismatch(f"operator shape must be positive, got ({rows}, {cols})")
        self.rows = int(rows)
        self.cols = int(cols)
        self._apply = apply
        self._apply_adjoint = apply_adjoint
        self.dense = dense

    @classmethod
    def from_matrix(cls, M) -> "LinOp":
        M = np.array(M, dtype=float, ndmin=2)
        if M.ndim != 2:
            raise DimensionMismatch(f"matrix must be 2-D, got shape {M.shape}")
        M.setflags(write=False)
        return cls(M.shape[0], M.shape[1], M.dot, M.T.dot, dense=M)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.cols,):
            raise DimensionMismatch(f"expected vector of length {self.cols}, got {x.shape}")
        return self._apply(x)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.rows,):
            raise DimensionMismatch(f"expected vector of length {self.rows}, got {y.shape}")
        return self._apply_adjoint(y)

    __call__ = apply

    def to_dense(self) -> np.ndarray:
        if self.dense is None:
            cols = [self._apply(e) for e in np.eye(self.cols)]
            M = np.column_stack(cols).reshape(self.rows, self.cols)
            M.setflags(write=False)
            self.dense = M
        return self.dense

    def __repr__(self):
        kind = "dense" if self.dense is not None else "matrix-free"
        return f"LinOp({self.rows}x{self.cols}, {kind})"


def as_linop(A) -> LinOp:
    """Coerce a matrix, nested list, scalar or :class:`LinOp` to a :class:`LinOp`."""
    if isinstance(A, LinOp):
        return A
    return LinOp.from_matrix(A)


@dataclass(frozen=True)
class SpectralSummary:
    """Eigenvalue extremes of ``A^T A``.

    Attributes:
        op_norm_sq: largest eigenvalue, i.e. ``||A||^2``.
        sigma_plus: smallest eigenvalue above ``rank_tol * op_norm_sq``.
        sigma_min: smallest eigenvalue (zero when below the rank threshold).
        rank_tol: relative threshold used to separate zero eigenvalues.
    """

    op_norm_sq: float
    sigma_plus: float
    sigma_min: float
    rank_tol: float


def _power_top(G: np.ndarray, tol=1e-13, max_iter=20000, seed=0) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


def _inverse_power_bottom(G: np.ndarray, tol=1e-13, max_iter=20000, seed=1) -> Optional[float]:
    # Requires G positive definite; returns None when Cholesky fails.
    try:
        factor = scipy.linalg.cho_factor(G)
    except np.linalg.LinAlgError:
        return None
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    mu = 0.0
    for _ in range(max_iter):
        w = scipy.linalg.cho_solve(factor, v)
        mu_new = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(mu_new - mu) <= tol * abs(mu_new):
            break
        mu = mu_new
    return float(v @ (G @ v))


def _gram_eigenvalues(M: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(M.T @ M)


def spectral_summary(A, rank_tol: float = DEFAULT_RANK_TOL) -> SpectralSummary:
    """Eigenvalue extremes of ``A^T A`` used by the step-size conditions.

    Dense symmetric eigendecomposition is used up to 512 columns. Above that
    the smaller of ``A^T A`` and ``A A^T`` is handled by power iteration for
    the top eigenvalue and inverse power iteration for the bottom one, with a
    dense fallback when the smaller Gram matrix is singular.

    Raises:
        ZeroOperator: if ``A`` is the zero map.
    """
    M = as_linop(A).to_dense()
    if not np.any(M):
        raise ZeroOperator("operator is identically zero")
    n = M.shape[1]
    if n <= DENSE_EIG_MAX_COLS:
        ev = _gram_eigenvalues(M)
        top = float(ev[-1])
        thresh = rank_tol * top
        positive = ev[ev > thresh]
        sigma_plus = float(positive[0])
        sigma_min = float(ev[0]) if ev[0] > thresh else 0.0
        return SpectralSummary(top, sigma_plus, sigma_min, rank_tol)

    small = M @ M.T if M.shape[0] < n else M.T @ M
    top = _power_top(small)
    bottom = _inverse_power_bottom(small)
    if bottom is None or bottom <= rank_tol * top:
        ev = np.linalg.eigvalsh(small)
        top = float(ev[-1])
        positive = ev[ev > rank_tol * top]
        bottom = float(positive[0])
        full_rank = ev[0] > rank_tol * top and small.shape[0] == n
    else:
        full_rank = small.shape[0] == n
    sigma_min = bottom if full_rank else 0.0
    return SpectralSummary(float(top), float(bottom), float(sigma_min), rank_tol)


def op_norm(A) -> float:
    """Spectral norm ``||A||``."""
    M = as_linop(A).to_dense()
    if not np.any(M):
        return 0.0
    return float(np.linalg.norm(M, 2))


def project_onto_range_adjoint(S, u, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Euclidean projection of ``u`` onto ``Im(S^T)`` (the row space of ``S``).

    The result satisfies ``||P(u)|| <= ||S u|| / sqrt(sigma_plus)``.
    """
    M = as_linop(S).to_dense()
    u = np.asarray(u, dtype=float)
    if u.shape != (M.shape[1],):
        raise DimensionMismatch(f"expected vector of length {M.shape[1]}, got {u.shape}")
    if not np.any(M):
        raise ZeroOperator("operator is identically zero")
    ev, V = np.linalg.eigh(M.T @ M)
    keep = ev > rank_tol * ev[-1]
    Vp = V[:, keep]
    return Vp @ (Vp.T @ u)


def range_contains(A, v, tol: float = 1e-9) -> bool:
    """Whether ``v`` lies in ``Im(A)`` up to a least-squares residual.

    True iff ``min_x ||A x - v|| <= tol * max(1, ||v||)``. Degenerate input
    (empty vectors, wrong length) yields False rather than raising.
    """
    try:
        M = as_linop(A).to_dense()
    except (DimensionMismatch, ValueError):
        return False
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0 or v.shape[0] != M.shape[0]:
        return False
    x, *_ = np.linalg.lstsq(M, v, rcond=None)
    resid = float(np.linalg.norm(M @ x - v))
    return resid <= tol * max(1.0, float(np.linalg.norm(v)))
