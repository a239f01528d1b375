"""Dense-to-TT factorization, orthogonalization and rounding."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import core as _core
from .core import (TensorTrain, TensorTrainBatch, TTShape, _check_tt,
                   flat_cores, from_flat)
from .exceptions import DensificationError, ShapeError, TTError
from .opcount import contract, qr, svd


@dataclass(frozen=True)
class TruncationSpec:
    """How aggressively an SVD sweep may truncate.

    ``max_rank=None`` leaves ranks unbounded; ``epsilon`` is the relative
    Frobenius error budget for the whole sweep (0 keeps everything but
    numerically-zero singular values).
    """

    max_rank: Optional[int] = None
    epsilon: float = 0.0

    def __post_init__(self):
        if self.max_rank is not None and int(self.max_rank) < 1:
            raise TTError(f"max_rank must be >= 1, got {self.max_rank}")
        if not 0.0 <= self.epsilon < 1.0 or not math.isfinite(self.epsilon):
            raise TTError(f"epsilon must lie in [0, 1), got {self.epsilon}")


def truncation_rank(s, delta, max_rank=None, shape=None):
    """Rank to keep for stacked descending singular values ``s`` of shape (b, k).

    Per member this is the smallest rank whose discarded tail has Frobenius
    norm at most ``delta``, capped by ``max_rank``. Singular values below
    ``max(shape) * eps * s_max`` count as zero. For a batch the largest
    member rank wins so all members keep a common rank. Always >= 1.
    """
    s = np.atleast_2d(s)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), s.shape[:1])
    # tail[:, j] = ||s[:, j:]||, so keeping j values costs tail[:, j]
    tail = np.sqrt(np.cumsum((s ** 2)[:, ::-1], axis=1)[:, ::-1])
    tail = np.concatenate([tail, np.zeros((s.shape[0], 1))], axis=1)
    by_eps = np.argmax(tail <= delta[:, None], axis=1)
    tol = (max(shape) if shape else s.shape[1]) * np.finfo(float).eps
    by_noise = np.sum(s > tol * s[:, :1], axis=1)
    ranks = np.minimum(by_eps, by_noise)
    rank = max(int(ranks.max()), 1)
    if max_rank is not None:
        rank = min(rank, int(max_rank))
    return rank


def _spec(max_rank, epsilon):
    return TruncationSpec(max_rank=max_rank, epsilon=float(epsilon))


def to_tt_tensor(dense, max_rank=None, epsilon=0.0, max_elements=None) -> TensorTrain:
    """Factorize a dense array with the TT-SVD sweep.

    Each of the ``d - 1`` truncations may discard at most
    ``epsilon * ||dense|| / sqrt(d - 1)``, so the total error is bounded by
    ``epsilon * ||dense||``.
    """
    spec = _spec(max_rank, epsilon)
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim < 1:
        raise ShapeError("to_tt_tensor needs at least a 1-d array")
    limit = _core.DEFAULT_MAX_ELEMENTS if max_elements is None else max_elements
    if dense.size > limit:
        raise DensificationError(dense.size, limit)
    if not np.all(np.isfinite(dense)):
        raise TTError("dense input contains non-finite entries")
    dims = dense.shape
    d = len(dims)
    if d == 1:
        return TensorTrain([dense.reshape(1, dims[0], 1).copy()])
    delta = spec.epsilon * np.linalg.norm(dense) / math.sqrt(d - 1)
    cores = []
    rank = 1
    rest = dense
    for k in range(d - 1):
        mat = rest.reshape(rank * dims[k], -1)
        u, s, vt = svd(mat)
        new_rank = truncation_rank(s[None], delta, spec.max_rank, mat.shape)
        cores.append(u[:, :new_rank].reshape(rank, dims[k], new_rank))
        rest = s[:new_rank, None] * vt[:new_rank]
        rank = new_rank
    cores.append(rest.reshape(rank, dims[-1], 1))
    return TensorTrain(cores)


def to_tt_matrix(matrix, shape, max_rank=None, epsilon=0.0, max_elements=None) -> TensorTrain:
    """Factorize a dense matrix into a TT-matrix with modes ``shape``.

    ``shape`` is a list of ``(m_k, n_k)`` pairs with ``prod(m)`` rows and
    ``prod(n)`` columns. With two modes and ``max_rank=1`` the result is the
    Frobenius-optimal Kronecker product approximation.
    """
    shape = TTShape.of(shape)
    if not shape.is_matrix:
        raise ShapeError("to_tt_matrix needs (rows, cols) pairs for every mode")
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != shape.dense_shape:
        raise ShapeError(f"matrix of shape {matrix.shape} does not match mode "
                         f"shape {shape} (expects {shape.dense_shape})")
    d = shape.ndims
    tensor = matrix.reshape(shape.row_dims + shape.col_dims)
    perm = [i for k in range(d) for i in (k, d + k)]
    tensor = tensor.transpose(perm).reshape(shape.mode_sizes)
    tt = to_tt_tensor(tensor, max_rank=max_rank, epsilon=epsilon,
                      max_elements=max_elements)
    return from_flat(flat_cores(tt), shape, batched=False)


def _orthogonalize_flat(cores, direction, transfers=None):
    # ``transfers`` collects the triangular factors pushed across each cut;
    # for a right sweep over a left-orthogonal train their singular values
    # are those of the corresponding unfolding
    cores = list(cores)
    d = len(cores)
    b = cores[0].shape[0]
    if direction == "left":
        for k in range(d - 1):
            _, r, n, r2 = cores[k].shape
            q, rr = qr(cores[k].reshape(b, r * n, r2))
            cores[k] = q.reshape(b, r, n, q.shape[-1])
            cores[k + 1] = contract("sxy,syiz->sxiz", rr, cores[k + 1])
            if transfers is not None:
                transfers.append(rr)
    elif direction == "right":
        for k in range(d - 1, 0, -1):
            _, r, n, r2 = cores[k].shape
            mat = cores[k].reshape(b, r, n * r2).transpose(0, 2, 1)
            q, rr = qr(mat)
            cores[k] = q.transpose(0, 2, 1).reshape(b, q.shape[-1], n, r2)
            cores[k - 1] = contract("sxiy,szy->sxiz", cores[k - 1], rr)
            if transfers is not None:
                transfers.append(rr)
    else:
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    return cores


def orthogonalize(t, direction="left"):
    """QR sweep making all cores but one orthogonal.

    ``"left"`` leaves every core except the last left-orthogonal
    (``sum_i G[i].T @ G[i] = I``); ``"right"`` mirrors it and leaves the
    first core carrying the norm. Ranks can only shrink, to
    ``min(r_{k-1} * n_k, r_k)`` for the left sweep.
    """
    _check_tt(t)
    if direction not in ("left", "right"):
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    cores = _orthogonalize_flat(flat_cores(t), direction)
    return from_flat(cores, t.shape, isinstance(t, TensorTrainBatch))


def round(t, max_rank=None, epsilon=0.0):  # noqa: A001 - mirrors the TT literature
    """Recompress ``t`` to lower TT-ranks.

    Right-orthogonalizes, then truncates with a left-to-right SVD sweep.
    The result is quasi-optimal: its error is at most ``sqrt(d - 1)`` times
    the best approximation with the same ranks (exactly optimal for
    ``d = 2``). Batches share one rank per boundary, the largest any member
    needs.
    """
    _check_tt(t)
    spec = _spec(max_rank, epsilon)
    d = t.ndims
    if d == 1:
        return t
    cores = _orthogonalize_flat(flat_cores(t), "right")
    b = cores[0].shape[0]
    norms = np.sqrt(np.sum(cores[0].reshape(b, -1) ** 2, axis=1))
    delta = spec.epsilon * norms / math.sqrt(d - 1)
    for k in range(d - 1):
        _, r, n, r2 = cores[k].shape
        mat = cores[k].reshape(b, r * n, r2)
        u, s, vt = svd(mat)
        rank = truncation_rank(s, delta, spec.max_rank, mat.shape[1:])
        cores[k] = u[:, :, :rank].reshape(b, r, n, rank)
        sv = s[:, :rank, None] * vt[:, :rank, :]
        cores[k + 1] = contract("sxy,syiz->sxiz", sv, cores[k + 1])
    return from_flat(cores, t.shape, isinstance(t, TensorTrainBatch))
