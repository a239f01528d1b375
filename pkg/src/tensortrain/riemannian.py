"""Tangent spaces of the fixed-TT-rank manifold.

A point ``B`` with ranks ``r`` is stored twice: left-orthogonal cores ``U_k``
and right-orthogonal cores ``V_k``. A tangent vector at ``B`` is

    sum_k U_1 ... U_{k-1} delta_k V_{k+1} ... V_d

with the gauge condition ``sum_i U_k[i].T @ delta_k[i] = 0`` for ``k < d``.
Under that gauge the ``d`` terms are mutually orthogonal, which is what makes
:func:`tangent_gram` cheap.

All kernels run on flattened cores ``(b, r, N, r')``; see :mod:`.core`.
"""
from __future__ import annotations

import numbers
from typing import Optional, Sequence, Union

import numpy as np

from .core import (TensorTrain, TensorTrainBatch, TTShape, _check_tt,
                   flat_cores, from_flat)
from .decomp import _orthogonalize_flat
from .exceptions import (BaseMismatchError, RankDeficientBaseError,
                         ShapeError, TTError)
from .opcount import contract

_SINGULAR_RTOL = 1e-13


class TangentSpace:
    """Orthogonalized forms of a base point, reusable across projections.

    Building one costs two QR sweeps; pass it instead of the raw base to
    :func:`project` and friends when projecting repeatedly onto the same
    point.
    """

    def __init__(self, where: TensorTrain):
        if not isinstance(where, TensorTrain):
            raise TypeError("the base point must be a single TensorTrain, got "
                            f"{type(where).__name__}")
        self.shape = where.shape
        self.ranks = where.ranks
        raw = flat_cores(where)
        left = _orthogonalize_flat(raw, "left")
        transfers = []
        right = _orthogonalize_flat(left, "right", transfers)
        for label, cores in (("left", left), ("right", right)):
            got = (1,) + tuple(c.shape[-1] for c in cores)
            if got != self.ranks:
                raise RankDeficientBaseError(
                    f"{label}-orthogonalization of the base point gives ranks "
                    f"{got}, below the declared {self.ranks}")
        _check_numerical_rank(transfers)
        self._left = tuple(c[0] for c in left)
        self._right = tuple(c[0] for c in right)

    @property
    def ndims(self):
        return self.shape.ndims

    @property
    def left(self):
        """Flattened left-orthogonal cores ``(r, N, r')``."""
        return self._left

    @property
    def right(self):
        return self._right

    @property
    def base_left(self) -> TensorTrain:
        return from_flat([c[None] for c in self._left], self.shape, False)

    @property
    def base_right(self) -> TensorTrain:
        return from_flat([c[None] for c in self._right], self.shape, False)

    def same_as(self, other: "TangentSpace", atol=1e-14) -> bool:
        if other is self:
            return True
        if self.shape != other.shape or self.ranks != other.ranks:
            return False
        return all(np.allclose(a, b, rtol=0, atol=atol)
                   for a, b in zip(self._left + self._right,
                                   other._left + other._right))

    def __repr__(self):
        return f"TangentSpace(shape={self.shape}, ranks={self.ranks})"


def _check_numerical_rank(transfers):
    # transfers come from the right sweep, last cut first; a tiny singular
    # value means the declared rank is not attained even though every QR
    # returned full-width factors
    d = len(transfers) + 1
    for j, rr in enumerate(transfers):
        s = np.linalg.svd(rr[0], compute_uv=False)
        if s[-1] <= _SINGULAR_RTOL * s[0]:
            raise RankDeficientBaseError(
                f"base point is numerically rank deficient between cores "
                f"{d - 2 - j} and {d - 1 - j}")


def tangent_space(where) -> TangentSpace:
    if isinstance(where, TangentSpace):
        return where
    return TangentSpace(where)


class TangentVector:
    """One tangent vector, or a batch of them, anchored at a shared base.

    ``deltas`` are stored flattened with a leading batch axis; the public
    :attr:`deltas` property returns them in the base's native core layout.
    """

    def __init__(self, space: TangentSpace, deltas: Sequence[np.ndarray], batched: bool):
        self.space = space
        self._deltas = tuple(deltas)
        self.batched = batched
        for k, (delta, u) in enumerate(zip(self._deltas, space.left)):
            if delta.shape[1:] != u.shape:
                raise ShapeError(f"delta {k} has extents {delta.shape[1:]}, "
                                 f"expected {u.shape}")
            if not batched and delta.shape[0] != 1:
                raise ShapeError("a single tangent vector needs batch axis 1")

    @property
    def shape(self) -> TTShape:
        return self.space.shape

    @property
    def batch_size(self) -> Optional[int]:
        return self._deltas[0].shape[0] if self.batched else None

    @property
    def base_left(self) -> TensorTrain:
        return self.space.base_left

    @property
    def base_right(self) -> TensorTrain:
        return self.space.base_right

    @property
    def deltas(self) -> list:
        out = []
        shape = self.shape
        for k, delta in enumerate(self._deltas):
            if shape.is_matrix:
                delta = delta.reshape(delta.shape[:2] + (shape.row_dims[k], shape.col_dims[k])
                                      + delta.shape[-1:])
            out.append(delta if self.batched else delta[0])
        return out

    def __len__(self):
        if not self.batched:
            raise TypeError("a single tangent vector has no length")
        return self.batch_size

    def __getitem__(self, index):
        if not self.batched:
            raise TypeError("only batched tangent vectors can be indexed")
        if isinstance(index, numbers.Integral):
            return TangentVector(self.space, [d[[index]] for d in self._deltas], False)
        return TangentVector(self.space, [d[index] for d in self._deltas], True)

    def _combine(self, other, alpha):
        if not isinstance(other, TangentVector):
            return NotImplemented
        if not self.space.same_as(other.space):
            raise BaseMismatchError("tangent vectors live at different base points")
        a, b = self._deltas, other._deltas
        n = max(a[0].shape[0], b[0].shape[0])
        if a[0].shape[0] not in (1, n) or b[0].shape[0] not in (1, n):
            raise TTError("incompatible tangent batch sizes")
        return TangentVector(self.space, [x + alpha * y for x, y in zip(a, b)],
                             self.batched or other.batched)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, alpha):
        if not isinstance(alpha, numbers.Real):
            return NotImplemented
        return TangentVector(self.space, [alpha * d for d in self._deltas], self.batched)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def gauge_residual(self) -> float:
        """Largest ``|sum_i U_k[i].T delta_k[i]|`` entry over ``k < d``."""
        worst = 0.0
        for u, delta in zip(self.space.left[:-1], self._deltas[:-1]):
            worst = max(worst, float(np.max(np.abs(
                np.einsum("aic,said->scd", u, delta)))))
        return worst

    def to_tt(self):
        return tangent_to_tt(self)

    def full(self, max_elements=None):
        return tangent_to_tt(self).full(max_elements=max_elements)

    def __repr__(self):
        extra = f", batch_size={self.batch_size}" if self.batched else ""
        return f"TangentVector(shape={self.shape}, ranks={self.space.ranks}{extra})"


def _enforce_gauge(space, deltas):
    # remove the drift component U_k (U_k^T delta_k) accumulated by rounding
    out = list(deltas)
    for k in range(len(out) - 1):
        u = space.left[k]
        coef = contract("aic,said->scd", u, out[k])
        out[k] = out[k] - contract("aic,scd->said", u, coef)
    return out


def _project_kernel(space, what, weights=None):
    """Deltas of ``P_space(what_s)``, or of ``sum_s w_s what_s`` when weighted.

    ``what`` is a list of flattened cores ``(b, ra, N, ra')``. Cost per member
    is ``O(d N ra rb (ra + rb))``; the weighted sum is folded into the last
    contraction so no rank ``b * ra`` intermediate is ever formed.
    """
    U, V = space.left, space.right
    d = len(what)
    b = what[0].shape[0]
    rhs = [None] * (d + 1)
    rhs[d] = np.ones((b, 1, 1))
    for k in range(d - 1, 0, -1):
        tmp = contract("saic,scd->said", what[k], rhs[k + 1])
        rhs[k] = contract("said,eid->sae", tmp, V[k])
    lhs = np.ones((b, 1, 1))
    deltas = []
    for k in range(d):
        part = contract("sab,sbic->saic", lhs, what[k])
        if k == d - 1:
            if weights is None:
                deltas.append(part)
            else:
                deltas.append(contract("saic,s->aic", part, weights)[None])
            break
        lhs = contract("saic,aie->sec", part, U[k])
        part = part - contract("aie,sec->saic", U[k], lhs)
        if weights is None:
            deltas.append(contract("saic,sce->saie", part, rhs[k + 1]))
        else:
            weighted = rhs[k + 1] * weights[:, None, None]
            deltas.append(contract("saic,sce->aie", part, weighted)[None])
    return _enforce_gauge(space, deltas)


def _check_what(what, space):
    _check_tt(what, "what")
    if what.shape != space.shape:
        raise ShapeError(f"cannot project a tensor of shape {what.shape} onto the "
                         f"tangent space at shape {space.shape}")


def project(what, where: Union[TensorTrain, TangentSpace]) -> TangentVector:
    """Orthogonal projection of ``what`` onto the tangent space at ``where``.

    ``what`` may be a batch, giving a batched tangent vector. ``where`` may be
    a precomputed :class:`TangentSpace`.
    """
    space = tangent_space(where)
    _check_what(what, space)
    deltas = _project_kernel(space, flat_cores(what))
    return TangentVector(space, deltas, isinstance(what, TensorTrainBatch))


def project_sum(what, where, weights=None) -> TangentVector:
    """``P_where(sum_i weights[i] * what[i])`` without forming the sum.

    Environments of every batch member are contracted against the shared
    base and accumulated straight into the delta cores, costing
    ``O(b d r_B r_A n (r_A + r_B))`` instead of the
    ``O(b d r_B n (r_A^2 + r_A r_B + r_B^2))`` of projecting, summing and
    rounding. ``weights`` defaults to all ones.
    """
    space = tangent_space(where)
    _check_what(what, space)
    cores = flat_cores(what)
    b = cores[0].shape[0]
    if weights is None:
        weights = np.ones(b)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.shape[0] != b:
        raise TTError(f"got {weights.shape[0]} weights for a batch of size {b}")
    deltas = _project_kernel(space, cores, weights)
    return TangentVector(space, deltas, False)


def project_matmul(matrix: TensorTrain, what, where) -> TangentVector:
    """``P_where(matrix @ what)`` for a TT-matrix and TT vector(s).

    The matrix is contracted inside the environments, so the rank
    ``r_A * r_c`` product is never built. Per member the cost is
    ``O(d r_A r_c n (r_c r_b + n r_A r_b + r_b^2))``.
    """
    if not isinstance(matrix, TensorTrain) or not matrix.is_matrix:
        raise TypeError("project_matmul needs a single TT-matrix as first argument")
    _check_tt(what, "what")
    if what.is_matrix:
        raise ShapeError("project_matmul projects matrix-by-vector products; "
                         "`what` must be a TT tensor")
    space = tangent_space(where)
    if space.shape.is_matrix:
        raise ShapeError("the base point of project_matmul must be a TT tensor")
    for k, (m, n, nc, nb) in enumerate(zip(matrix.shape.row_dims, matrix.shape.col_dims,
                                           what.shape.row_dims, space.shape.row_dims)):
        if n != nc:
            raise ShapeError(f"mode {k}: matrix has {n} columns but vector has {nc} entries")
        if m != nb:
            raise ShapeError(f"mode {k}: matrix has {m} rows but base has {nb} entries")
    if not matrix.ndims == what.ndims == space.ndims:
        raise ShapeError("matrix, vector and base must have the same number of modes")

    A = matrix.cores
    C = flat_cores(what)
    U, V = space.left, space.right
    d = len(A)
    b = C[0].shape[0]
    rhs = [None] * (d + 1)
    rhs[d] = np.ones((b, 1, 1, 1))
    for k in range(d - 1, 0, -1):
        # rhs[k][s, a, c, e]: matrix rank a, vector rank c, base rank e
        tmp = contract("spqr,eir->spqei", rhs[k + 1], V[k])
        tmp = contract("spqei,aijp->sqeaj", tmp, A[k])
        rhs[k] = contract("sqeaj,scjq->sace", tmp, C[k])
    lhs = np.ones((b, 1, 1, 1))
    deltas = []
    for k in range(d):
        # lhs[s, e, a, c]: base rank e, matrix rank a, vector rank c
        tmp = contract("seac,scjq->seajq", lhs, C[k])
        part = contract("seajq,aijp->seiqp", tmp, A[k])
        if k == d - 1:
            deltas.append(part.reshape(b, part.shape[1], part.shape[2], 1))
            break
        lhs = contract("seiqp,eir->srpq", part, U[k])
        part = part - contract("eir,srpq->seiqp", U[k], lhs)
        deltas.append(contract("seiqp,spqr->seir", part, rhs[k + 1]))
    deltas = _enforce_gauge(space, deltas)
    return TangentVector(space, deltas, isinstance(what, TensorTrainBatch))


def tangent_to_tt(v: TangentVector):
    """Explicit TT form of a tangent vector, interior ranks ``2 r``.

    Cores are ``[delta_1, U_1]``, ``[[V_k, 0], [delta_k, U_k]]`` and
    ``[V_d; delta_d]``.
    """
    space = v.space
    deltas = v._deltas
    d = len(deltas)
    b = deltas[0].shape[0]
    if d == 1:
        return from_flat(list(deltas), space.shape, v.batched)
    cores = []
    for k in range(d):
        u = np.broadcast_to(space.left[k], deltas[k].shape)
        w = np.broadcast_to(space.right[k], deltas[k].shape)
        if k == 0:
            cores.append(np.concatenate([deltas[k], u], axis=-1))
        elif k == d - 1:
            cores.append(np.concatenate([w, deltas[k]], axis=1))
        else:
            _, r, n, r2 = deltas[k].shape
            core = np.zeros((b, 2 * r, n, 2 * r2))
            core[:, :r, :, :r2] = w
            core[:, r:, :, :r2] = deltas[k]
            core[:, r:, :, r2:] = u
            cores.append(core)
    return from_flat(cores, space.shape, v.batched)


def stack_tangents(vectors: Sequence[TangentVector]) -> TangentVector:
    """Concatenate tangent vectors (single or batched) sharing one base."""
    vectors = list(vectors)
    if not vectors:
        raise TTError("cannot stack an empty sequence of tangent vectors")
    space = vectors[0].space
    for i, v in enumerate(vectors[1:], start=1):
        if not space.same_as(v.space):
            raise BaseMismatchError(f"tangent vector {i} is anchored at a different "
                                    "base point than vector 0")
    deltas = [np.concatenate(ds, axis=0) for ds in zip(*(v._deltas for v in vectors))]
    return TangentVector(space, deltas, True)


def tangent_gram(vectors, other=None) -> np.ndarray:
    """Gram matrix of tangent vectors at one base, ``O(b^2 d r^2 n)``.

    By the gauge condition ``<x_i, x_j> = sum_k <delta_k^(i), delta_k^(j)>``,
    so the Gram matrix is a single product of the stacked delta
    coordinates. ``vectors`` is a batched :class:`TangentVector` or a
    sequence of them; ``other`` optionally supplies the column vectors.
    """
    x = vectors if isinstance(vectors, TangentVector) else stack_tangents(vectors)
    y = x if other is None else (
        other if isinstance(other, TangentVector) else stack_tangents(other))
    if not x.space.same_as(y.space):
        raise BaseMismatchError("Gram matrix of tangent vectors at different base points")
    coords_x = np.concatenate([dl.reshape(dl.shape[0], -1) for dl in x._deltas], axis=1)
    coords_y = (coords_x if y is x else
                np.concatenate([dl.reshape(dl.shape[0], -1) for dl in y._deltas], axis=1))
    gram = contract("sx,tx->st", coords_x, coords_y)
    if y is x:
        gram = 0.5 * (gram + gram.T)
    return gram
