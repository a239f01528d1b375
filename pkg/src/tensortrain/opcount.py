"""Multiply-add accounting and the counted numerical kernels.

Every contraction in the library goes through :func:`contract`, which maps a
two-operand einsum expression onto one batched ``np.matmul`` call and charges
the product of all index extents to the active counters. QR and SVD charge
``m * n * min(m, n)`` per matrix. Counts are exact functions of the operand
shapes, which makes them usable as complexity witnesses in tests::

    with count_ops() as ops:
        project_sum(batch, space)
    print(ops.total)
"""
from __future__ import annotations

import contextlib
import math
import threading

import numpy as np

_local = threading.local()


class OpCounter:
    """Accumulates multiply-add counts, split by kernel kind."""

    def __init__(self):
        self.contract = 0
        self.qr = 0
        self.svd = 0

    @property
    def total(self):
        return self.contract + self.qr + self.svd

    def __repr__(self):
        return (f"OpCounter(total={self.total}, contract={self.contract}, "
                f"qr={self.qr}, svd={self.svd})")


def _stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


@contextlib.contextmanager
def count_ops():
    """Count multiply-adds issued by the current thread inside the block.

    Nested blocks each see the work done while they are active.
    """
    counter = OpCounter()
    stack = _stack()
    stack.append(counter)
    try:
        yield counter
    finally:
        stack.remove(counter)


def _charge(kind, amount):
    for counter in _stack():
        setattr(counter, kind, getattr(counter, kind) + int(amount))


def contract(subscripts, x, y):
    """Two-operand einsum evaluated as a single batched matmul.

    Labels present in both operands and the output are batch labels, labels
    in both operands but not the output are summed. A label that occurs in
    only one operand and not in the output is summed out up front. Repeated
    labels inside one operand are not supported.
    """
    inputs, out = subscripts.replace(" ", "").split("->")
    xs, ys = inputs.split(",")
    if x.ndim != len(xs) or y.ndim != len(ys):
        raise ValueError(f"operand ranks do not match {subscripts!r}: "
                         f"{x.shape}, {y.shape}")
    sizes = {}
    for labels, shape in ((xs, x.shape), (ys, y.shape)):
        for lab, dim in zip(labels, shape):
            if sizes.setdefault(lab, dim) != dim:
                raise ValueError(f"extent mismatch for label {lab!r} in "
                                 f"{subscripts!r}: {sizes[lab]} vs {dim}")
    _charge("contract", math.prod(sizes.values()))

    drop_x = [i for i, lab in enumerate(xs) if lab not in ys and lab not in out]
    if drop_x:
        x = x.sum(axis=tuple(drop_x))
        xs = "".join(lab for lab in xs if lab in ys or lab in out)
    drop_y = [i for i, lab in enumerate(ys) if lab not in xs and lab not in out]
    if drop_y:
        y = y.sum(axis=tuple(drop_y))
        ys = "".join(lab for lab in ys if lab in xs or lab in out)

    batch = [lab for lab in out if lab in xs and lab in ys]
    xfree = [lab for lab in xs if lab in out and lab not in ys]
    yfree = [lab for lab in ys if lab in out and lab not in xs]
    summed = [lab for lab in xs if lab in ys and lab not in out]

    def extent(labels):
        return math.prod(sizes[lab] for lab in labels)

    xt = x.transpose([xs.index(lab) for lab in batch + xfree + summed])
    yt = y.transpose([ys.index(lab) for lab in batch + summed + yfree])
    xt = xt.reshape(extent(batch), extent(xfree), extent(summed))
    yt = yt.reshape(extent(batch), extent(summed), extent(yfree))
    res = np.matmul(xt, yt)
    res_labels = batch + xfree + yfree
    res = res.reshape([sizes[lab] for lab in res_labels])
    return res.transpose([res_labels.index(lab) for lab in out])


def qr(a):
    """Reduced QR of a stack of matrices, shape ``(..., m, n)``."""
    m, n = a.shape[-2:]
    _charge("qr", math.prod(a.shape[:-2]) * m * n * min(m, n))
    return np.linalg.qr(a, mode="reduced")


def svd(a):
    """Thin SVD of a stack of matrices, singular values descending."""
    m, n = a.shape[-2:]
    _charge("svd", math.prod(a.shape[:-2]) * m * n * min(m, n))
    return np.linalg.svd(a, full_matrices=False)
