"""Tensor Train decomposition: containers, algebra, Riemannian and Kronecker tools."""

from .core import (DEFAULT_MAX_ELEMENTS, TensorTrain, TensorTrainBatch,
                   TTShape, add, eye, from_cores, full, multiply, ones,
                   random, slice_tt, stack, validate_ranks, zeros)
from .decomp import (TruncationSpec, orthogonalize, round, to_tt_matrix,
                     to_tt_tensor)
from .exceptions import *  # noqa: F401,F403
from .kronecker import (KroneckerMatrix, kron_cholesky, kron_determinant,
                        kron_inverse, kron_slog_determinant, nearest_kronecker)
from .linalg import (flat_inner, frobenius_norm, matmul, matvec,
                     pairwise_flat_inner, transpose)
from .opcount import OpCounter, count_ops
from .riemannian import (TangentSpace, TangentVector, project, project_matmul,
                         project_sum, stack_tangents, tangent_gram,
                         tangent_space, tangent_to_tt)
from .serialization import dumps, load, loads, save

__version__ = "0.1.0"
