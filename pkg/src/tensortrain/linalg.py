"""Contraction-based algebra on TT objects and batches."""
from __future__ import annotations

import numpy as np

from .core import (TensorTrain, TensorTrainBatch, _check_tt,
                   _require_same_shape, broadcast_batch, expand_flat,
                   flat_cores)
from .decomp import _orthogonalize_flat
from .exceptions import ShapeError
from .opcount import contract


def _batched_native(t, size):
    """Native-layout cores with a leading batch axis of ``size``."""
    cores = [c[None] if isinstance(t, TensorTrain) else c for c in t.cores]
    if cores[0].shape[0] != size:
        cores = [np.broadcast_to(c, (size,) + c.shape[1:]) for c in cores]
    return cores


def _wrap(cores, batched):
    if batched:
        return TensorTrainBatch(cores)
    return TensorTrain([c[0] for c in cores])


def _check_inner_dims(a_cols, b_rows):
    for k, (p, q) in enumerate(zip(a_cols, b_rows)):
        if p != q:
            raise ShapeError(f"mode {k}: left operand has {p} columns but right "
                             f"operand has {q} rows")
    if len(a_cols) != len(b_rows):
        raise ShapeError(f"operands have {len(a_cols)} and {len(b_rows)} modes")


def matmul(a, b):
    """Matrix product of TT-matrices, batch-aware.

    Core ``k`` of the result has slices ``C[i, j] = sum_s A[i, s] (x) B[s, j]``
    so interior ranks multiply. A batch times a single matrix gives
    ``C_i = A_i B``. A TT tensor on the right is treated as a vector
    (see :func:`matvec`).
    """
    _check_tt(a, "a")
    _check_tt(b, "b")
    if not a.is_matrix:
        raise ShapeError("left operand of matmul must be a TT-matrix")
    if not b.is_matrix:
        return matvec(a, b)
    _check_inner_dims(a.shape.col_dims, b.shape.row_dims)
    size = broadcast_batch(a, b)
    n = size or 1
    cores = []
    for x, y in zip(_batched_native(a, n), _batched_native(b, n)):
        z = contract("sxijy,sujkv->sxuikyv", x, y)
        s, rx, ru, m, k, ry, rv = z.shape
        cores.append(z.reshape(s, rx * ru, m, k, ry * rv))
    return _wrap(cores, size is not None)


def matvec(a, x):
    """TT-matrix times TT tensor; returns a TT tensor with multiplied ranks."""
    _check_tt(a, "a")
    _check_tt(x, "x")
    if not a.is_matrix:
        raise ShapeError("matvec needs a TT-matrix as its first argument")
    if x.is_matrix:
        raise ShapeError("matvec needs a TT tensor as its second argument; "
                         "use matmul for two TT-matrices")
    _check_inner_dims(a.shape.col_dims, x.shape.row_dims)
    size = broadcast_batch(a, x)
    n = size or 1
    cores = []
    for g, h in zip(_batched_native(a, n), _batched_native(x, n)):
        z = contract("sxijy,sujv->sxuiyv", g, h)
        s, rx, ru, m, ry, rv = z.shape
        cores.append(z.reshape(s, rx * ru, m, ry * rv))
    return _wrap(cores, size is not None)


def flat_inner(x, y):
    """Sum of the elementwise product, by a left-to-right environment sweep.

    Returns a float for two single objects, a length-``b`` array otherwise.
    Cost is ``O(d n r_x r_y (r_x + r_y))`` per pair.
    """
    _check_tt(x, "x")
    _check_tt(y, "y")
    _require_same_shape(x, y)
    size = broadcast_batch(x, y)
    n = size or 1
    env = np.ones((n, 1, 1))
    for gx, gy in zip(expand_flat(flat_cores(x), n), expand_flat(flat_cores(y), n)):
        tmp = contract("sab,saic->sbic", env, gx)
        env = contract("sbic,sbid->scd", tmp, gy)
    res = env[:, 0, 0]
    return float(res[0]) if size is None else res


def _as_batch(t):
    if isinstance(t, TensorTrain):
        return TensorTrainBatch([c[None] for c in t.cores])
    return t


def pairwise_flat_inner(x, y=None) -> np.ndarray:
    """Gram matrix ``G[i, j] = <x_i, y_j>`` of two batches.

    When ``y`` is omitted or is ``x`` itself only the upper triangle is
    computed and mirrored, roughly halving the work.
    """
    _check_tt(x, "x")
    if y is None:
        y = x
    _check_tt(y, "y")
    _require_same_shape(x, y)
    if y is x:
        return _symmetric_gram(_as_batch(x))
    x, y = _as_batch(x), _as_batch(y)
    b1, b2 = x.batch_size, y.batch_size
    env = np.ones((b1, b2, 1, 1))
    for gx, gy in zip(flat_cores(x), flat_cores(y)):
        tmp = contract("pqab,paic->pqbic", env, gx)
        env = contract("pqbic,qbid->pqcd", tmp, gy)
    return env[:, :, 0, 0]


def _symmetric_gram(x):
    b = x.batch_size
    rows, cols = np.triu_indices(b)
    env = np.ones((rows.size, 1, 1))
    for g in flat_cores(x):
        tmp = contract("sab,saic->sbic", env, g[rows])
        env = contract("sbic,sbid->scd", tmp, g[cols])
    gram = np.empty((b, b))
    gram[rows, cols] = env[:, 0, 0]
    gram[cols, rows] = env[:, 0, 0]
    return gram


def frobenius_norm(x, differentiable=False):
    """Frobenius norm of a TT object (per member for batches).

    By default the object is right-orthogonalized and the norm read off the
    first core, which keeps full relative accuracy. ``differentiable=True``
    uses ``sqrt(max(<x, x>, 0))`` instead; that path loses about half the
    significant digits when the squared norm suffers cancellation.
    """
    _check_tt(x)
    if differentiable:
        res = np.sqrt(np.maximum(flat_inner(x, x), 0.0))
    else:
        first = _orthogonalize_flat(flat_cores(x), "right")[0]
        res = np.sqrt(np.sum(first.reshape(first.shape[0], -1) ** 2, axis=1))
        if isinstance(x, TensorTrain):
            res = res[0]
    return float(res) if isinstance(x, TensorTrain) else res


def transpose(a):
    """Swap row and column indices of every core."""
    _check_tt(a)
    if not a.is_matrix:
        raise ShapeError("transpose needs a TT-matrix")
    if isinstance(a, TensorTrainBatch):
        return TensorTrainBatch([np.swapaxes(c, 2, 3) for c in a.cores])
    return TensorTrain([np.swapaxes(c, 1, 2) for c in a.cores])

