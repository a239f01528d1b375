"""Kronecker products as rank-1 TT-matrices.

A TT-matrix whose interior ranks are all 1 is exactly
``F_1 (x) F_2 (x) ... (x) F_d`` with ``F_k = core_k[0, :, :, 0]``, so
determinant, inverse and Cholesky factor reduce to per-factor work.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import lapack

from .core import TensorTrain
from .decomp import round as tt_round
from .exceptions import (NotPositiveDefiniteError, NotSquareError, RankError,
                         ShapeError, SingularFactorError)

#: Largest 1-norm condition number a factor may have in :func:`kron_inverse`.
DEFAULT_MAX_CONDITION = 1e12


class KroneckerMatrix(TensorTrain):
    """A TT-matrix with all interior ranks 1, plus factor access.

    It is a :class:`TensorTrain`, so every generic operation accepts it.
    """

    def __init__(self, cores):
        super().__init__(cores)
        if not self.is_matrix:
            raise ShapeError("a Kronecker matrix must be a TT-matrix")
        if any(r != 1 for r in self.ranks):
            raise RankError(f"a Kronecker matrix needs all TT-ranks 1, got {self.ranks}")

    @classmethod
    def from_factors(cls, factors):
        return cls([np.asarray(f, dtype=np.float64)[None, :, :, None] for f in factors])

    @classmethod
    def from_tt(cls, t: TensorTrain):
        if isinstance(t, cls):
            return t
        return cls(t.cores)

    @property
    def factors(self) -> list:
        return [c[0, :, :, 0] for c in self.cores]

    def __repr__(self):
        return f"KroneckerMatrix(shape={self.shape})"


def _square_factors(m):
    m = KroneckerMatrix.from_tt(m)
    factors = m.factors
    for k, f in enumerate(factors):
        if f.shape[0] != f.shape[1]:
            raise NotSquareError(f"factor {k} is {f.shape[0]}x{f.shape[1]}, not square")
    return m, factors


def kron_slog_determinant(m):
    """``(sign, log|det|)`` of a Kronecker product, overflow-safe.

    Uses ``det(F_1 (x) ... (x) F_d) = prod_k det(F_k) ** (N / m_k)`` with
    ``N`` the total size. A singular factor gives ``(0.0, -inf)``.
    """
    m, factors = _square_factors(m)
    size = math.prod(f.shape[0] for f in factors)
    sign, logdet = 1.0, 0.0
    for f in factors:
        s, ld = np.linalg.slogdet(f)
        power = size // f.shape[0]
        if s == 0:
            return 0.0, -np.inf
        if s < 0 and power % 2:
            sign = -sign
        logdet += power * ld
    return sign, float(logdet)


def kron_determinant(m) -> float:
    """Determinant in ``sum_k O(m_k^3)``; overflows to ``+-inf`` instead of raising."""
    sign, logdet = kron_slog_determinant(m)
    if sign == 0:
        return 0.0
    with np.errstate(over="ignore"):
        return float(sign * np.exp(logdet))


def kron_inverse(m, max_condition=DEFAULT_MAX_CONDITION) -> KroneckerMatrix:
    """Inverse as the Kronecker product of the factor inverses.

    Raises :class:`SingularFactorError` naming the first factor that is
    singular or whose 1-norm condition number exceeds ``max_condition``.
    """
    _, factors = _square_factors(m)
    inverses = []
    for k, f in enumerate(factors):
        try:
            inv = np.linalg.inv(f)
        except np.linalg.LinAlgError:
            raise SingularFactorError(f"factor {k} is singular") from None
        cond = np.linalg.norm(f, 1) * np.linalg.norm(inv, 1)
        if not np.isfinite(cond) or cond > max_condition:
            raise SingularFactorError(
                f"factor {k} is ill-conditioned (1-norm condition {cond:.3g} "
                f"> {max_condition:.3g})")
        inverses.append(inv)
    return KroneckerMatrix.from_factors(inverses)


def kron_cholesky(m, sym_tol=1e-10) -> KroneckerMatrix:
    """Lower Cholesky factor via ``chol(A (x) B) = chol(A) (x) chol(B)``."""
    _, factors = _square_factors(m)
    chols = []
    for k, f in enumerate(factors):
        scale = max(1.0, float(np.max(np.abs(f))))
        if np.max(np.abs(f - f.T)) > sym_tol * scale:
            raise NotPositiveDefiniteError(f"factor {k} is not symmetric")
        c, info = lapack.dpotrf(f, lower=1, clean=1)
        if info > 0:
            raise NotPositiveDefiniteError(
                f"factor {k} is not positive definite: pivot {info} is not positive")
        if info < 0:  # pragma: no cover - argument error inside LAPACK
            raise RuntimeError(f"dpotrf failed with info={info}")
        chols.append(c)
    return KroneckerMatrix.from_factors(chols)


def nearest_kronecker(t: TensorTrain) -> KroneckerMatrix:
    """Closest Kronecker product by TT rounding to rank 1.

    Works on a sum of Kronecker products without forming the dense matrix.
    For two factors the result is Frobenius-optimal.
    """
    if not isinstance(t, TensorTrain) or not t.is_matrix:
        raise ShapeError("nearest_kronecker needs a single TT-matrix")
    return KroneckerMatrix(tt_round(t, max_rank=1).cores)
