import math

import numpy as np
import pytest
from hypothesis import settings

import tensortrain as tt

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def rel_err(actual, expected):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = np.linalg.norm(expected)
    diff = np.linalg.norm(actual - expected)
    return diff / scale if scale > 0 else diff


def feasible_ranks(dims, r):
    """Interior ranks capped so a random TT of these ranks is full-rank."""
    d = len(dims)
    ranks = [1]
    for k in range(1, d):
        cap = min(math.prod(dims[:k]), math.prod(dims[k:]))
        ranks.append(min(r, cap))
    return tuple(ranks + [1])


def dense_tangent_projector(base):
    """Orthogonal projector onto the tangent space at ``base``, densely.

    The tangent space is spanned by all tensors obtained by replacing one
    core of ``base`` with an arbitrary core, so the columns of the matrix
    built here span it; an SVD gives an orthonormal basis.
    """
    cores = list(base.cores)
    columns = []
    for k, core in enumerate(cores):
        for idx in np.ndindex(core.shape):
            unit = np.zeros(core.shape)
            unit[idx] = 1.0
            varied = cores[:k] + [unit] + cores[k + 1:]
            columns.append(tt.full(tt.from_cores(varied)).ravel())
    mat = np.array(columns).T
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    basis = u[:, s > 1e-10 * s[0]]
    return basis @ basis.T


def rearrange(matrix, m1, n1, m2, n2):
    """Rearrangement that turns A (x) B into vec(A) vec(B)^T."""
    blocks = matrix.reshape(m1, m2, n1, n2).transpose(0, 2, 1, 3)
    return blocks.reshape(m1 * n1, m2 * n2)


def best_rank_error(matrix, rank):
    s = np.linalg.svd(matrix, compute_uv=False)
    return float(np.sqrt(np.sum(s[rank:] ** 2)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ------------------------------------------------------

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::test_criterion_")[1]
        _CRITERIA[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: int(s.split("_")[0])):
        number, _, label = name.partition("_")
        status = "PASS" if _CRITERIA[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {number}: {label.replace('_', ' ')}")
