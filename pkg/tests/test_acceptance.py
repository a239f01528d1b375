"""End-to-end acceptance checks, one test per criterion.

Run ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per criterion
is printed in the terminal summary.
"""
import json
import math
import resource
import subprocess
import sys
import time

import numpy as np

import tensortrain as tt
from tensortrain import KroneckerMatrix

from conftest import best_rank_error, feasible_ranks, rearrange, rel_err


# -- independent dense oracles -------------------------------------------------

def dense_of(cores):
    """Contract TT cores with numpy only (mode pairs kept adjacent)."""
    out = np.ones((1, 1))
    for core in cores:
        r, *mode, r2 = core.shape
        out = out.reshape(-1, r) @ core.reshape(r, -1)
        out = out.reshape(-1, r2)
    return out


def dense_tensor(t):
    return dense_of(t.cores).reshape(t.shape.modes if not t.is_matrix
                                     else [x for m in t.shape.modes for x in m])


def dense_matrix(t):
    rows, cols = t.shape.row_dims, t.shape.col_dims
    d = len(rows)
    x = dense_of(t.cores).reshape([x for pair in zip(rows, cols) for x in pair])
    x = x.transpose(list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2)))
    return x.reshape(math.prod(rows), math.prod(cols))


def dense_ttsvd(x, max_rank):
    """Plain sequential truncated SVD; returns the reconstructed tensor."""
    dims = x.shape
    cores, rest, r = [], x, 1
    for n in dims[:-1]:
        u, s, vt = np.linalg.svd(rest.reshape(r * n, -1), full_matrices=False)
        keep = min(max_rank, len(s))
        cores.append(u[:, :keep].reshape(r, n, keep))
        rest = s[:keep, None] * vt[:keep]
        r = keep
    cores.append(rest.reshape(r, dims[-1], 1))
    return dense_of(cores).reshape(dims)


def random_dims(rng, d, low=1, high=4):
    return [int(v) for v in rng.integers(low, high + 1, size=d)]


# -- criterion 1 -----------------------------------------------------------------

def _core_linalg_decomp_errors(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    dims = random_dims(rng, d)
    r = int(rng.integers(1, 5))
    s = seed * 7
    x = tt.random(dims, r, seed=s)
    y = tt.random(dims, int(rng.integers(1, 5)), seed=s + 1)
    X, Y = dense_tensor(x), dense_tensor(y)
    alpha = float(rng.standard_normal())
    errs = {}
    errs["full"] = rel_err(tt.full(x), X)
    errs["add"] = rel_err(tt.full(tt.add(x, y)), X + Y)
    errs["sub"] = rel_err(tt.full(x - y), X - Y)
    errs["hadamard"] = rel_err(tt.full(tt.multiply(x, y)), X * Y)
    errs["scale"] = rel_err(tt.full(tt.multiply(x, alpha)), alpha * X)
    errs["ones_zeros"] = rel_err(tt.full(tt.ones(dims)), np.ones(dims)) + \
        np.abs(tt.full(tt.zeros(dims))).max()

    spec, index = [], []
    for n in dims:
        kind = rng.integers(3)
        if kind == 0:
            i = int(rng.integers(n))
            spec.append(i)
            index.append(i)
        elif kind == 1:
            lo = int(rng.integers(n))
            sl = slice(lo, n, int(rng.integers(1, 3)))
            spec.append(sl)
            index.append(sl)
        else:
            spec.append(None)
            index.append(slice(None))
    sliced = tt.slice_tt(x, spec)
    expected = X[tuple(index)]
    errs["slice"] = rel_err(sliced if np.isscalar(sliced) else tt.full(sliced), expected)

    inner = tt.flat_inner(x, y)
    errs["flat_inner"] = abs(inner - np.sum(X * Y)) / max(abs(np.sum(X * Y)), 1e-300)
    errs["norm"] = abs(tt.frobenius_norm(x) - np.linalg.norm(X)) / np.linalg.norm(X)
    errs["norm_differentiable"] = abs(tt.frobenius_norm(x, differentiable=True)
                                      - np.linalg.norm(X)) / np.linalg.norm(X)

    b1, b2 = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    xb = tt.random(dims, r, seed=s + 2, batch_size=b1)
    yb = tt.random(dims, 2, seed=s + 3, batch_size=b2)
    xd = np.stack([dense_tensor(xb[i]).ravel() for i in range(b1)])
    yd = np.stack([dense_tensor(yb[i]).ravel() for i in range(b2)])
    errs["pairwise"] = rel_err(tt.pairwise_flat_inner(xb, yb), xd @ yd.T)
    errs["batch_norm"] = rel_err(tt.frobenius_norm(xb), np.linalg.norm(xd, axis=1))

    errs["tt_svd_exact"] = rel_err(tt.full(tt.to_tt_tensor(X)), X)
    cap = int(rng.integers(1, 4))
    errs["tt_svd_capped"] = rel_err(tt.full(tt.to_tt_tensor(X, max_rank=cap)), dense_ttsvd(X, cap))
    for direction in ("left", "right"):
        errs[f"orth_{direction}"] = rel_err(tt.full(tt.orthogonalize(x, direction)), X)
    errs["round_exact"] = rel_err(tt.full(tt.round(x)), X)
    errs["round_capped"] = rel_err(tt.full(tt.round(x, max_rank=cap)), dense_ttsvd(X, cap))

    # matrices: keep the dense operands small
    dm = min(d, 3)
    rows, mids, cols = (random_dims(rng, dm, 1, 3) for _ in range(3))
    a = tt.random(list(zip(rows, mids)), int(rng.integers(1, 5)), seed=s + 4)
    b = tt.random(list(zip(mids, cols)), int(rng.integers(1, 5)), seed=s + 5)
    v = tt.random(mids, int(rng.integers(1, 5)), seed=s + 6)
    A, B, V = dense_matrix(a), dense_matrix(b), dense_tensor(v).ravel()
    errs["matmul"] = rel_err(dense_matrix(tt.matmul(a, b)), A @ B)
    errs["matvec"] = rel_err(tt.full(tt.matvec(a, v)).ravel(), A @ V)
    errs["transpose"] = rel_err(dense_matrix(tt.transpose(a)), A.T)
    errs["matrix_full"] = rel_err(tt.full(a), A)
    errs["tt_matrix_exact"] = rel_err(dense_matrix(tt.to_tt_matrix(A, list(zip(rows, mids)))), A)
    errs["eye"] = rel_err(tt.full(tt.eye(rows)), np.eye(math.prod(rows)))
    return errs


def test_criterion_1_dense_oracle_suite():
    start = time.perf_counter()
    worst = {}
    for seed in range(200):
        for name, err in _core_linalg_decomp_errors(seed).items():
            worst[name] = max(worst.get(name, 0.0), float(err))
    elapsed = time.perf_counter() - start
    failing = {k: v for k, v in worst.items() if not v <= 1e-11}
    assert not failing, f"relative errors above 1e-11: {failing}"
    assert elapsed < 60, f"took {elapsed:.1f} s"


# -- criteria 2 and 3 ------------------------------------------------------------

def _delta_err(u, v):
    num = math.sqrt(sum(np.sum((a - b) ** 2) for a, b in zip(u.deltas, v.deltas)))
    den = math.sqrt(sum(np.sum(b ** 2) for b in v.deltas))
    return num / den if den > 0 else num


def _riemannian_instance(seed):
    rng = np.random.default_rng(10_000 + seed)
    d = int(rng.integers(1, 5))
    dims = random_dims(rng, d, 2, 4)
    base = tt.random(dims, feasible_ranks(dims, int(rng.integers(1, 4))), seed=seed)
    b = int(rng.integers(1, 9))
    what = tt.random(dims, int(rng.integers(1, 4)), seed=seed + 1, batch_size=b)
    weights = rng.standard_normal(b)
    cols = random_dims(rng, d, 1, 4)
    matrix = tt.random(list(zip(dims, cols)), int(rng.integers(1, 4)), seed=seed + 2)
    vecs = tt.random(cols, int(rng.integers(1, 4)), seed=seed + 3, batch_size=b)
    return rng, base, what, weights, matrix, vecs


def test_criterion_2_fused_riemannian_ops_match_composition():
    start = time.perf_counter()
    worst = {"project_sum": 0.0, "project_matmul": 0.0, "tangent_gram": 0.0}
    for seed in range(50):
        _, base, what, weights, matrix, vecs = _riemannian_instance(seed)
        fused = tt.project_sum(what, base, weights)
        composed = tt.project(what[0], base) * weights[0]
        for i in range(1, what.batch_size):
            composed = composed + tt.project(what[i], base) * weights[i]
        worst["project_sum"] = max(worst["project_sum"], _delta_err(fused, composed))

        fused = tt.project_matmul(matrix, vecs, base)
        composed = tt.project(tt.matvec(matrix, vecs), base)
        worst["project_matmul"] = max(worst["project_matmul"], _delta_err(fused, composed))

        v = tt.project(what, base)
        gram = tt.tangent_gram(v)
        conv = tt.tangent_to_tt(v)
        expected = tt.pairwise_flat_inner(conv, conv)
        err = np.max(np.abs(gram - expected)) / max(np.max(np.abs(expected)), 1e-300)
        worst["tangent_gram"] = max(worst["tangent_gram"], err)
    elapsed = time.perf_counter() - start
    assert all(v <= 1e-10 for v in worst.values()), worst
    assert elapsed < 60, f"took {elapsed:.1f} s"


def test_criterion_3_projection_axioms():
    worst = {"linearity": 0.0, "idempotence": 0.0, "expansion": 0.0, "gauge": 0.0}
    for seed in range(100):
        rng, base, what, weights, matrix, vecs = _riemannian_instance(seed)
        space = tt.tangent_space(base)
        x = tt.random(base.shape.modes, int(rng.integers(1, 4)), seed=seed + 4)
        y = what[0]
        alpha = float(rng.standard_normal())
        px, py = tt.project(x, space), tt.project(y, space)
        combo = tt.project(tt.add(tt.multiply(x, alpha), y), space)
        worst["linearity"] = max(worst["linearity"], _delta_err(combo, px * alpha + py))
        again = tt.project(px.to_tt(), space)
        worst["idempotence"] = max(worst["idempotence"], _delta_err(again, px))
        for src, proj in ((x, px), (y, py)):
            ratio = tt.frobenius_norm(proj.to_tt()) / tt.frobenius_norm(src)
            worst["expansion"] = max(worst["expansion"], ratio - 1.0)
        produced = [px, py, combo, again, tt.project(what, space),
                    tt.project_sum(what, space, weights), tt.project_matmul(matrix, vecs, space)]
        for v in produced:
            worst["gauge"] = max(worst["gauge"], v.gauge_residual())
    assert worst["linearity"] <= 1e-11, worst
    assert worst["idempotence"] <= 1e-11, worst
    assert worst["expansion"] <= 1e-11, worst
    assert worst["gauge"] <= 1e-10, worst


# -- criterion 4 -----------------------------------------------------------------

def test_criterion_4_operation_count_scaling():
    dims = [8] * 6
    space = tt.tangent_space(tt.random(dims, 8, seed=0))
    batch_sizes = (1, 2, 4, 8, 16)
    counts = []
    for b in batch_sizes:
        what = tt.random(dims, 8, seed=1, batch_size=b)
        with tt.count_ops() as c:
            tt.project_sum(what, space)
        counts.append(c.total)
    # cost per extra batch member between consecutive batch sizes
    marginal = [(c2 - c1) / (b2 - b1) for (b1, c1), (b2, c2)
                in zip(zip(batch_sizes, counts), zip(batch_sizes[1:], counts[1:]))]
    spread = max(marginal) / min(marginal) - 1.0
    print(f"\nproject_sum counts {counts}; marginal per member {marginal}")
    assert spread <= 0.10, f"growth deviates {spread:.1%} from linear"
    # the per-member cost is of order d r_B r_A n (r_A + r_B)
    per_member = marginal[0] / (6 * 8 * 8 * 8 * 16)
    assert 0.5 <= per_member <= 10, per_member

    dims = [16] * 6
    gram_counts = []
    for r in (4, 8, 16):
        v = tt.project(tt.random(dims, 2, seed=1, batch_size=4), tt.random(dims, r, seed=0))
        with tt.count_ops() as c:
            tt.tangent_gram(v)
        gram_counts.append(c.total)
    ratios = [c2 / c1 for c1, c2 in zip(gram_counts, gram_counts[1:])]
    print(f"tangent_gram counts {gram_counts}; doubling ratios {ratios}")
    assert all(abs(q / 4.0 - 1.0) <= 0.15 for q in ratios), ratios


# -- criterion 5 -----------------------------------------------------------------

LARGE_RUNS = [(op, b) for op in ("matvec", "matmul", "norm", "round", "gram", "project")
              for b in (1, 100)]


def test_criterion_5_default_config_feasibility(tmp_path):
    results = []
    for op, b in LARGE_RUNS:
        out = tmp_path / f"{op}_{b}.json"
        start = time.perf_counter()
        proc = subprocess.run(
            [sys.executable, "-m", "tensortrain", "bench", "--op", op, "--batch-size", str(b),
             "--format", "json", "--out", str(out)],
            capture_output=True, text=True, timeout=300)
        wall = time.perf_counter() - start
        assert proc.returncode == 0, proc.stderr
        row = json.loads(out.read_text())["rows"][0]
        results.append((op, b, wall, row["peak_rss_mb"], row["repeats"],
                        row["median_ms_per_object"]))
    children_peak_mb = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss / 1024
    for op, b, wall, rss, reps, med in results:
        print(f"\n{op:8s} b={b:3d} wall={wall:5.1f}s peak={rss:7.1f}MB "
              f"repeats={reps:2d} median={med:.3f}ms/object", end="")
    print()
    slow = [(op, b, wall) for op, b, wall, *_ in results if wall >= 60]
    heavy = [(op, b, rss) for op, b, _, rss, *_ in results if rss >= 4096]
    assert not slow, slow
    assert not heavy, heavy
    assert children_peak_mb < 4096


# -- criterion 6 -----------------------------------------------------------------

def _kron_factors(rng):
    while True:
        d = int(rng.integers(1, 4))
        sizes = random_dims(rng, d, 1, 4)
        if math.prod(sizes) <= 64:
            break
    return sizes


def dense_kron(factors):
    out = np.ones((1, 1))
    for f in factors:
        out = np.kron(out, f)
    return out


def test_criterion_6_kronecker_suite():
    worst = {"det": 0.0, "slogdet": 0.0, "inverse": 0.0, "cholesky": 0.0, "nearest": 0.0}
    rng = np.random.default_rng(6)
    for _ in range(50):
        sizes = _kron_factors(rng)
        general = [rng.standard_normal((m, m)) + m * np.eye(m) for m in sizes]
        spd = []
        for m in sizes:
            g = rng.standard_normal((m, m))
            spd.append(g.T @ g + np.eye(m))
        dense = dense_kron(general)
        det = np.linalg.det(dense)
        worst["det"] = max(worst["det"],
                           abs(tt.kron_determinant(KroneckerMatrix.from_factors(general)) - det)
                           / abs(det))
        sign, logdet = tt.kron_slog_determinant(KroneckerMatrix.from_factors(general))
        ref_sign, ref_log = np.linalg.slogdet(dense)
        assert sign == ref_sign
        worst["slogdet"] = max(worst["slogdet"], abs(logdet - ref_log) / max(1.0, abs(ref_log)))
        inv = tt.kron_inverse(KroneckerMatrix.from_factors(general))
        worst["inverse"] = max(worst["inverse"], rel_err(dense_matrix(inv), np.linalg.inv(dense)))
        chol = tt.kron_cholesky(KroneckerMatrix.from_factors(spd))
        worst["cholesky"] = max(worst["cholesky"],
                                rel_err(dense_matrix(chol), np.linalg.cholesky(dense_kron(spd))))

    for _ in range(50):
        m1, n1, m2, n2 = random_dims(rng, 4, 1, 4)
        a1, a2 = rng.standard_normal((m1, n1)), rng.standard_normal((m1, n1))
        b1, b2 = rng.standard_normal((m2, n2)), rng.standard_normal((m2, n2))
        exact = np.kron(a1, b1) + np.kron(a2, b2)
        approx = tt.nearest_kronecker(tt.add(KroneckerMatrix.from_factors([a1, b1]),
                                             KroneckerMatrix.from_factors([a2, b2])))
        err = np.linalg.norm(exact - dense_matrix(approx))
        optimal = best_rank_error(rearrange(exact, m1, n1, m2, n2), 1)
        worst["nearest"] = max(worst["nearest"], abs(err - optimal))
    assert all(worst[k] <= 1e-9 for k in ("det", "slogdet", "inverse", "cholesky")), worst
    assert worst["nearest"] <= 1e-10, worst


# -- criterion 7 -----------------------------------------------------------------

def test_criterion_7_rounding_quality():
    rng = np.random.default_rng(7)
    worst_gap = 0.0
    for _ in range(100):
        m, n = random_dims(rng, 2, 2, 8)
        dense = rng.standard_normal((m, n))
        rank = int(rng.integers(1, min(m, n) + 1))
        t = tt.to_tt_tensor(dense)
        err = np.linalg.norm(dense - tt.full(tt.round(t, max_rank=rank)))
        worst_gap = max(worst_gap, abs(err - best_rank_error(dense, rank)))
    assert worst_gap <= 1e-10, worst_gap

    worst_idem = worst_exact = 0.0
    for seed in range(100):
        rng = np.random.default_rng(70_000 + seed)
        dims = random_dims(rng, int(rng.integers(2, 6)), 2, 4)
        r = int(rng.integers(1, 5))
        cap = int(rng.integers(1, 5))
        t = tt.random(dims, r, seed=seed)
        once = tt.round(t, max_rank=cap)
        twice = tt.round(once, max_rank=cap)
        worst_idem = max(worst_idem, rel_err(tt.full(twice), tt.full(once)))
        exact = tt.round(t, max_rank=max(r, cap))
        worst_exact = max(worst_exact, rel_err(tt.full(exact), tt.full(t)))
    assert worst_idem <= 1e-10, worst_idem
    assert worst_exact <= 1e-10, worst_exact


# -- criterion 8 -----------------------------------------------------------------

def _header_length(data):
    flags, d = np.frombuffer(data[6:10], dtype="<u2")
    n_dims = 2 * int(d) if flags & 1 else int(d)
    return 14 + 4 * (n_dims + int(d) + 1) + 4


def test_criterion_8_serialization():
    rng = np.random.default_rng(8)
    accepted = []
    for seed in range(100):
        dims = random_dims(rng, int(rng.integers(1, 5)))
        shape = list(zip(dims, random_dims(rng, len(dims)))) if seed % 2 else dims
        batch = int(rng.integers(1, 4)) if seed % 3 == 0 else None
        t = tt.random(shape, int(rng.integers(1, 4)), seed=seed, batch_size=batch)
        data = tt.dumps(t)
        back = tt.loads(data)
        assert type(back) is type(t) and back.shape == t.shape
        for a, b in zip(t.cores, back.cores):
            assert a.tobytes() == b.tobytes()
        assert tt.dumps(back) == data

        for pos in range(_header_length(data)):
            for flip in range(1, 256):
                bad = bytearray(data)
                bad[pos] ^= flip
                try:
                    tt.loads(bytes(bad))
                except tt.TTFormatError:
                    continue
                accepted.append((seed, pos, flip))
    assert not accepted, f"corrupted headers accepted: {accepted[:5]}"
