"""TT containers, construction, indexing and elementwise arithmetic.

A TT tensor of shape ``(n_1, ..., n_d)`` stores ``d`` cores of extents
``(r_{k-1}, n_k, r_k)``; a TT-matrix stores cores ``(r_{k-1}, m_k, n_k, r_k)``
and represents a ``prod(m) x prod(n)`` matrix. A batch adds a leading axis
of size ``b`` to every core. Boundary ranks are always 1.
"""
from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import (BatchSizeError, DensificationError, RankError,
                         ShapeError, TTError)
from .opcount import contract

#: Default guard for :func:`full`; override per call or by rebinding.
DEFAULT_MAX_ELEMENTS = 10**8


@dataclass(frozen=True)
class TTShape:
    """Per-mode dimensions of a TT tensor or TT-matrix.

    ``col_dims`` is ``None`` for tensors. Use :meth:`of` to build from a list
    of ints (tensor) or a list of ``(rows, cols)`` pairs (matrix).
    """

    row_dims: tuple
    col_dims: Optional[tuple] = None

    def __post_init__(self):
        row = tuple(int(n) for n in self.row_dims)
        object.__setattr__(self, "row_dims", row)
        if self.col_dims is not None:
            col = tuple(int(n) for n in self.col_dims)
            object.__setattr__(self, "col_dims", col)
            if len(col) != len(row):
                raise ShapeError(f"row dims {row} and col dims {col} differ in length")
        if not row:
            raise ShapeError("a TT shape needs at least one mode")
        for n in row + (self.col_dims or ()):
            if n < 1:
                raise ShapeError(f"mode dimensions must be >= 1, got {self.modes}")

    @classmethod
    def of(cls, spec) -> "TTShape":
        if isinstance(spec, TTShape):
            return spec
        spec = list(spec)
        if not spec:
            raise ShapeError("a TT shape needs at least one mode")
        pairs = [isinstance(m, (tuple, list)) for m in spec]
        if all(pairs):
            if any(len(m) != 2 for m in spec):
                raise ShapeError(f"matrix modes must be (rows, cols) pairs: {spec}")
            return cls(tuple(m[0] for m in spec), tuple(m[1] for m in spec))
        if any(pairs):
            raise ShapeError(f"mixed tensor and matrix modes in {spec}")
        return cls(tuple(spec))

    @property
    def is_matrix(self) -> bool:
        return self.col_dims is not None

    @property
    def ndims(self) -> int:
        return len(self.row_dims)

    @property
    def modes(self) -> tuple:
        if self.is_matrix:
            return tuple(zip(self.row_dims, self.col_dims))
        return self.row_dims

    @property
    def mode_sizes(self) -> tuple:
        """Number of entries per core slice (``m_k * n_k`` for matrices)."""
        if self.is_matrix:
            return tuple(m * n for m, n in zip(self.row_dims, self.col_dims))
        return self.row_dims

    @property
    def numel(self) -> int:
        return math.prod(self.mode_sizes)

    @property
    def dense_shape(self) -> tuple:
        if self.is_matrix:
            return (math.prod(self.row_dims), math.prod(self.col_dims))
        return self.row_dims

    def transposed(self) -> "TTShape":
        if not self.is_matrix:
            raise ShapeError("only TT-matrices can be transposed")
        return TTShape(self.col_dims, self.row_dims)

    def __str__(self):
        return str(list(self.modes))


def validate_ranks(ranks, ndims) -> tuple:
    """Normalize an int or a ``d + 1`` sequence into a validated rank tuple."""
    if isinstance(ranks, numbers.Integral):
        ranks = (1,) + (int(ranks),) * (ndims - 1) + (1,)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != ndims + 1:
        raise RankError(f"expected {ndims + 1} ranks for {ndims} modes, got {ranks}")
    if ranks[0] != 1 or ranks[-1] != 1:
        raise RankError(f"boundary ranks must be 1, got {ranks}")
    if any(r < 1 for r in ranks):
        raise RankError(f"TT-ranks must be >= 1, got {ranks}")
    return ranks


def _readonly(a):
    v = a.view()
    v.flags.writeable = False
    return v


def _check_cores(cores, batched):
    """Validate core extents; return ``(shape, ranks, batch_size)``."""
    cores = list(cores)
    if not cores:
        raise TTError("cannot build a TT object from an empty list of cores")
    lead = 1 if batched else 0
    ndim = cores[0].ndim
    if ndim not in (3 + lead, 4 + lead):
        raise ShapeError(f"core 0 has {ndim} axes; expected {3 + lead} "
                         f"(tensor) or {4 + lead} (matrix)")
    is_matrix = ndim == 4 + lead
    for k, core in enumerate(cores):
        if core.ndim != ndim:
            raise ShapeError(f"core {k} has {core.ndim} axes but core 0 has {ndim}")
        if 0 in core.shape:
            raise ShapeError(f"core {k} has an empty axis: {core.shape}")
    batch_size = None
    if batched:
        batch_size = cores[0].shape[0]
        for k, core in enumerate(cores):
            if core.shape[0] != batch_size:
                raise BatchSizeError(f"core {k} has batch size {core.shape[0]}, "
                                     f"core 0 has {batch_size}")
    ranks = [cores[0].shape[lead]]
    for k, core in enumerate(cores):
        if core.shape[lead] != ranks[-1]:
            raise RankError(f"rank mismatch at boundary {k}: core {k - 1} has "
                            f"trailing rank {ranks[-1]} but core {k} has leading "
                            f"rank {core.shape[lead]}")
        ranks.append(core.shape[-1])
    if ranks[0] != 1 or ranks[-1] != 1:
        raise RankError(f"boundary ranks must be 1, got {tuple(ranks)}")
    if is_matrix:
        shape = TTShape(tuple(c.shape[lead + 1] for c in cores),
                        tuple(c.shape[lead + 2] for c in cores))
    else:
        shape = TTShape(tuple(c.shape[lead + 1] for c in cores))
    return shape, tuple(ranks), batch_size


def _as_float_cores(cores):
    out = []
    for k, core in enumerate(cores):
        core = np.asarray(core)
        if np.iscomplexobj(core):
            raise TTError(f"core {k} is complex; only real cores are supported")
        out.append(np.asarray(core, dtype=np.float64))
    return out


class _TTBase:
    __array_priority__ = 100

    @property
    def cores(self) -> tuple:
        return self._cores

    @property
    def shape(self) -> TTShape:
        return self._shape

    @property
    def ranks(self) -> tuple:
        return self._ranks

    @property
    def ndims(self) -> int:
        return self._shape.ndims

    @property
    def is_matrix(self) -> bool:
        return self._shape.is_matrix

    def full(self, max_elements=None):
        return full(self, max_elements=max_elements)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, multiply(other, -1.0))

    def __rsub__(self, other):
        return add(other, multiply(self, -1.0))

    def __neg__(self):
        return multiply(self, -1.0)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from .linalg import matmul
        return matmul(self, other)


class TensorTrain(_TTBase):
    """A single tensor or matrix in TT format.

    The object is immutable: the stored cores are read-only views of the
    arrays passed in.
    """

    def __init__(self, cores: Sequence[np.ndarray]):
        cores = _as_float_cores(cores)
        self._shape, self._ranks, _ = _check_cores(cores, batched=False)
        self._cores = tuple(_readonly(c) for c in cores)

    batch_size = None

    def __getitem__(self, spec):
        return slice_tt(self, spec)

    def __repr__(self):
        kind = "matrix" if self.is_matrix else "tensor"
        return f"TensorTrain({kind}, shape={self.shape}, ranks={self.ranks})"


class TensorTrainBatch(_TTBase):
    """``b`` TT objects of identical shape and ranks, stored core-stacked.

    Core ``k`` has extents ``(b, r_{k-1}, n_k, r_k)`` (``m_k`` inserted before
    ``n_k`` for matrices). Indexing with an int returns a member
    :class:`TensorTrain`; indexing with a slice or an index array returns a
    sub-batch.
    """

    def __init__(self, cores: Sequence[np.ndarray]):
        cores = _as_float_cores(cores)
        self._shape, self._ranks, self._batch_size = _check_cores(cores, batched=True)
        self._cores = tuple(_readonly(c) for c in cores)

    @property
    def batch_size(self) -> int:
        return self._batch_size

    def __len__(self):
        return self._batch_size

    def __getitem__(self, index):
        if isinstance(index, numbers.Integral):
            if not -self._batch_size <= index < self._batch_size:
                raise IndexError(f"batch index {index} out of range for "
                                 f"batch of size {self._batch_size}")
            return TensorTrain([c[index] for c in self._cores])
        return TensorTrainBatch([c[index] for c in self._cores])

    def __iter__(self):
        for i in range(self._batch_size):
            yield self[i]

    def __repr__(self):
        kind = "matrix" if self.is_matrix else "tensor"
        return (f"TensorTrainBatch({kind}, batch_size={self.batch_size}, "
                f"shape={self.shape}, ranks={self.ranks})")


TTLike = (TensorTrain, TensorTrainBatch)


def _check_tt(t, name="argument"):
    if not isinstance(t, TTLike):
        raise TypeError(f"{name} must be a TensorTrain or TensorTrainBatch, "
                        f"got {type(t).__name__}")


# -- flat-core plumbing shared by the whole library -------------------------
# Kernels see every object as a list of (b, r_{k-1}, N_k, r_k) arrays where
# N_k = n_k for tensors and m_k * n_k for matrices, b = 1 for single objects.

def flat_cores(t):
    out = []
    for core in t.cores:
        if isinstance(t, TensorTrain):
            core = core[None]
        out.append(core.reshape(core.shape[0], core.shape[1], -1, core.shape[-1]))
    return out


def from_flat(cores, shape: TTShape, batched: bool):
    out = []
    for k, core in enumerate(cores):
        if shape.is_matrix:
            core = core.reshape(core.shape[0], core.shape[1], shape.row_dims[k],
                                shape.col_dims[k], core.shape[-1])
        out.append(core if batched else core[0])
    return TensorTrainBatch(out) if batched else TensorTrain(out)


def broadcast_batch(*objs):
    """Common batch size under the ``{1 -> b, b -> b}`` rule.

    Returns ``None`` when every input is a single :class:`TensorTrain`.
    """
    sizes = [o.batch_size for o in objs if isinstance(o, TensorTrainBatch)]
    if not sizes:
        return None
    target = max(sizes)
    for s in sizes:
        if s not in (1, target):
            raise BatchSizeError(f"incompatible batch sizes {sorted(set(sizes))}; "
                                 "only equal sizes or size 1 broadcast")
    return target


def expand_flat(cores, batch_size):
    if cores[0].shape[0] == batch_size:
        return cores
    return [np.broadcast_to(c, (batch_size,) + c.shape[1:]) for c in cores]


def _require_same_shape(a, b, what="operands"):
    if a.shape != b.shape:
        raise ShapeError(f"{what} have different shapes: {a.shape} vs {b.shape}")


# -- construction -----------------------------------------------------------

def from_cores(cores: Sequence[np.ndarray]) -> TensorTrain:
    """Wrap a list of cores without copying them.

    >>> from_cores([np.ones((1, 2, 3)), np.ones((3, 2, 1))]).ranks
    (1, 3, 1)
    """
    return TensorTrain(cores)


def stack(tts: Sequence[TensorTrain]) -> TensorTrainBatch:
    """Stack single TT objects with equal shapes and ranks into a batch."""
    tts = list(tts)
    if not tts:
        raise TTError("cannot stack an empty sequence")
    for i, t in enumerate(tts[1:], start=1):
        _require_same_shape(tts[0], t, f"members 0 and {i}")
        if t.ranks != tts[0].ranks:
            raise RankError(f"members 0 and {i} have different ranks: "
                            f"{tts[0].ranks} vs {t.ranks}")
    return TensorTrainBatch([np.stack(cs) for cs in zip(*(t.cores for t in tts))])


def _core_extents(shape, ranks, k):
    if shape.is_matrix:
        return (ranks[k], shape.row_dims[k], shape.col_dims[k], ranks[k + 1])
    return (ranks[k], shape.row_dims[k], ranks[k + 1])


def _build(shape, ranks, fill, batch_size):
    cores = []
    for k in range(shape.ndims):
        extents = _core_extents(shape, ranks, k)
        if batch_size is not None:
            extents = (batch_size,) + extents
        cores.append(fill(extents))
    return TensorTrainBatch(cores) if batch_size is not None else TensorTrain(cores)


def ones(shape, batch_size: Optional[int] = None):
    """All-ones tensor (or matrix) with every rank equal to 1."""
    shape = TTShape.of(shape)
    return _build(shape, (1,) * (shape.ndims + 1), np.ones, batch_size)


def zeros(shape, batch_size: Optional[int] = None):
    shape = TTShape.of(shape)
    return _build(shape, (1,) * (shape.ndims + 1), np.zeros, batch_size)


def random(shape, ranks, seed=None, batch_size: Optional[int] = None):
    """Random TT object with i.i.d. Gaussian cores.

    Every core is scaled by ``prod(interior ranks) ** (-1 / (2 d))`` so each
    entry of the dense tensor has unit variance regardless of the ranks.

    Args:
      shape: list of mode sizes, or list of ``(rows, cols)`` pairs for a
        TT-matrix.
      ranks: an int for uniform interior ranks, or the full ``d + 1`` tuple.
      seed: anything accepted by ``np.random.default_rng``.
      batch_size: when given, return a :class:`TensorTrainBatch`.
    """
    shape = TTShape.of(shape)
    ranks = validate_ranks(ranks, shape.ndims)
    rng = np.random.default_rng(seed)
    scale = math.prod(ranks) ** (-1.0 / (2 * shape.ndims))
    return _build(shape, ranks, lambda ext: rng.standard_normal(ext) * scale,
                  batch_size)


def eye(row_dims: Sequence[int]) -> TensorTrain:
    """Identity TT-matrix of size ``prod(row_dims)``, all ranks 1."""
    row_dims = [int(n) for n in row_dims]
    if not row_dims or any(n < 1 for n in row_dims):
        raise ShapeError(f"eye needs positive dimensions, got {row_dims}")
    return TensorTrain([np.eye(n)[None, :, :, None] for n in row_dims])


def full(t, max_elements: Optional[int] = None) -> np.ndarray:
    """Dense reconstruction.

    Tensors come back with shape ``(n_1, ..., n_d)``, TT-matrices as a
    ``prod(m) x prod(n)`` array; batches get a leading batch axis. Raises
    :class:`DensificationError` when the element count exceeds
    ``max_elements`` (default :data:`DEFAULT_MAX_ELEMENTS`).
    """
    _check_tt(t)
    limit = DEFAULT_MAX_ELEMENTS if max_elements is None else max_elements
    b = t.batch_size or 1
    count = b * t.shape.numel
    if count > limit:
        raise DensificationError(count, limit)
    cores = flat_cores(t)
    res = cores[0].reshape(b, cores[0].shape[2], cores[0].shape[3])
    for core in cores[1:]:
        res = contract("sxa,saib->sxib", res, core)
        res = res.reshape(b, -1, core.shape[-1])
    shape = t.shape
    res = res.reshape((b,) + shape.mode_sizes)
    if shape.is_matrix:
        d = shape.ndims
        res = res.reshape((b,) + tuple(x for m in shape.modes for x in m))
        perm = [0] + [1 + 2 * k for k in range(d)] + [2 + 2 * k for k in range(d)]
        res = res.transpose(perm).reshape((b,) + shape.dense_shape)
    return res if isinstance(t, TensorTrainBatch) else res[0]


# -- indexing ---------------------------------------------------------------

def _normalize_index(i, n, mode):
    if not isinstance(i, numbers.Integral):
        raise TypeError(f"mode {mode}: index must be int, slice or None, got {i!r}")
    if not -n <= i < n:
        raise IndexError(f"index {i} out of bounds for mode {mode} of size {n}")
    return int(i) % n


def _normalize_slice(s, n, mode):
    if s is None:
        return slice(None)
    if isinstance(s, slice):
        if len(range(*s.indices(n))) == 0:
            raise IndexError(f"slice {s} selects nothing from mode {mode} of size {n}")
        return s
    return None


def slice_tt(t: TensorTrain, spec):
    """Index a TT tensor mode by mode.

    ``spec`` holds one entry per mode (missing trailing modes mean "all"):
    an int fixes the mode, a ``slice`` (steps allowed) restricts it and
    ``None`` keeps it whole. For TT-matrices each entry is a
    ``(row_spec, col_spec)`` pair; a mode disappears only when both are ints,
    otherwise an int keeps a length-1 axis.

    A fixed mode turns its core into an ``r_{k-1} x r_k`` matrix that is
    multiplied into the nearest kept core on the left (the right one when
    no kept core exists yet). Fixing every mode returns a float.
    """
    if not isinstance(t, TensorTrain):
        raise TypeError("slice_tt expects a single TensorTrain")
    if not isinstance(spec, (tuple, list)):
        spec = (spec,)
    spec = list(spec)
    d = t.ndims
    if len(spec) > d:
        raise IndexError(f"too many indices: {len(spec)} for {d} modes")
    spec += [None] * (d - len(spec))

    kept = []
    carry = None
    for k, (core, s) in enumerate(zip(t.cores, spec)):
        if t.is_matrix:
            if s is None:
                s = (None, None)
            if not isinstance(s, (tuple, list)) or len(s) != 2:
                raise TypeError(f"mode {k}: matrix modes take (row, col) pairs, got {s!r}")
            rs, cs = s
            m, n = core.shape[1:3]
            if isinstance(rs, numbers.Integral) and isinstance(cs, numbers.Integral):
                mat = core[:, _normalize_index(rs, m, k), _normalize_index(cs, n, k), :]
                sliced = None
            else:
                parts = []
                for sub, size in ((rs, m), (cs, n)):
                    sl = _normalize_slice(sub, size, k)
                    if sl is None:
                        i = _normalize_index(sub, size, k)
                        sl = slice(i, i + 1)
                    parts.append(sl)
                sliced = core[:, parts[0], parts[1], :]
        else:
            n = core.shape[1]
            sl = _normalize_slice(s, n, k)
            if sl is None:
                mat = core[:, _normalize_index(s, n, k), :]
                sliced = None
            else:
                sliced = core[:, sl, :]

        if sliced is None:
            if kept:
                kept[-1] = np.tensordot(kept[-1], mat, axes=(-1, 0))
            else:
                carry = mat if carry is None else carry @ mat
        else:
            if carry is not None:
                sliced = np.tensordot(carry, sliced, axes=(1, 0))
                carry = None
            kept.append(sliced)
    if not kept:
        return float(carry[0, 0])
    return TensorTrain(kept)


# -- elementwise arithmetic -------------------------------------------------

def _binary_setup(a, b):
    _check_tt(a, "first operand")
    _check_tt(b, "second operand")
    _require_same_shape(a, b)
    size = broadcast_batch(a, b)
    n = size or 1
    return expand_flat(flat_cores(a), n), expand_flat(flat_cores(b), n), size


def add(a, b):
    """Elementwise sum; interior ranks add.

    Cores are block-diagonal concatenations (the first core is concatenated
    horizontally, the last vertically). Supports batch broadcasting.
    """
    ca, cb, size = _binary_setup(a, b)
    d = len(ca)
    if d == 1:
        cores = [ca[0] + cb[0]]
    else:
        cores = []
        for k, (x, y) in enumerate(zip(ca, cb)):
            if k == 0:
                cores.append(np.concatenate([x, y], axis=-1))
            elif k == d - 1:
                cores.append(np.concatenate([x, y], axis=1))
            else:
                s, ra, n, ra2 = x.shape
                rb, rb2 = y.shape[1], y.shape[3]
                z = np.zeros((s, ra + rb, n, ra2 + rb2))
                z[:, :ra, :, :ra2] = x
                z[:, ra:, :, ra2:] = y
                cores.append(z)
    return from_flat(cores, a.shape, size is not None)


def multiply(a, b):
    """Elementwise (Hadamard) product, or multiplication by a scalar.

    For two TT operands every core slice is the Kronecker product of the
    operand slices, so interior ranks multiply. A scalar scales the first
    core only and leaves the ranks unchanged.
    """
    if isinstance(a, numbers.Real) and not isinstance(b, numbers.Real):
        a, b = b, a
    if isinstance(b, numbers.Real):
        _check_tt(a)
        if not math.isfinite(b):
            raise TTError(f"cannot multiply by non-finite scalar {b}")
        cores = list(a.cores)
        cores[0] = cores[0] * float(b)
        if isinstance(a, TensorTrainBatch):
            return TensorTrainBatch(cores)
        return TensorTrain(cores)
    ca, cb, size = _binary_setup(a, b)
    cores = []
    for x, y in zip(ca, cb):
        z = contract("saib,scid->sacibd", x, y)
        s, ra, rc, n, rb, rd = z.shape
        cores.append(z.reshape(s, ra * rc, n, rb * rd))
    return from_flat(cores, a.shape, size is not None)
