"""Benchmark harness for the core operations at TT scale.

Default inputs: a batch of 100 random TT-matrices of size 10^10 x 10^10
(10 modes of size 10, TT-rank 10), TT vectors of size 10^10 with TT-rank 10,
and rank-100 vectors for the rounding and projection benchmarks. Times are
reported per object: the wall time of one batched call divided by the batch
size.
"""
from __future__ import annotations

import contextlib
import csv
import dataclasses
import hashlib
import io
import json
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import core, decomp, linalg, riemannian
from .exceptions import InfeasibleConfigError

try:
    import resource
except ImportError:  # pragma: no cover - non-Unix
    resource = None

#: Row order of the reference table.
TABLE_OPS = ("matvec", "matmul", "norm", "round", "gram", "project")
OPS = TABLE_OPS + ("project_sum", "project_matmul")
#: Ops applied independently per batch member; these may run in chunks.
_MAPPED = {"matvec", "matmul", "norm", "round", "project", "project_matmul"}


@dataclass
class BenchConfig:
    op: str
    d: int = 10
    n: int = 10
    rank: int = 10
    inflated_rank: int = 100
    batch_size: int = 100
    repeats: int = 30
    warmup: int = 5
    seed: int = 0
    threads: Optional[int] = None
    # stop repeating once this many seconds were spent (at least one timed run)
    max_time: float = 10.0
    memory_limit_mb: float = 4096.0
    # per-chunk working memory target for ops mapped over the batch
    chunk_mb: float = 512.0

    def validate(self):
        if self.op not in OPS:
            raise InfeasibleConfigError(f"unknown op {self.op!r}; choose from {', '.join(OPS)}")
        for name in ("d", "n", "rank", "inflated_rank", "batch_size", "repeats"):
            if getattr(self, name) < 1:
                raise InfeasibleConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.warmup < 0:
            raise InfeasibleConfigError("warmup must be >= 0")
        if self.threads is not None and self.threads < 1:
            raise InfeasibleConfigError("threads must be >= 1 or auto")
        if self.op in ("project", "project_sum", "project_matmul"):
            for k in range(1, self.d):
                cap = self.n ** min(k, self.d - k)
                if self.rank > cap:
                    raise InfeasibleConfigError(
                        f"a base point of rank {self.rank} is rank deficient at "
                        f"boundary {k} (at most {cap} with mode size {self.n})")


@dataclass
class BenchRow:
    op: str
    batch_size: int
    median_ms_per_object: float
    p10_ms_per_object: float
    p90_ms_per_object: float
    repeats: int
    warmup: int
    chunk_size: int
    input_checksum: str
    peak_rss_mb: Optional[float]
    config: dict
    host: dict


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def extend(self, other: "BenchReport"):
        self.rows.extend(other.rows)
        return self


def host_metadata() -> dict:
    import numpy
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "cpu_count": os.cpu_count(),
    }


def _peak_rss_mb():
    if resource is None:  # pragma: no cover
        return None
    # ru_maxrss is KiB on Linux
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def _working_bytes(cfg: BenchConfig) -> tuple:
    """(input bytes for the whole batch, working bytes per batch member)."""
    d, n, r, big, b = cfg.d, cfg.n, cfg.rank, cfg.inflated_rank, cfg.batch_size
    mat = d * n * n * r * r * 8
    vec = d * n * r * r * 8
    fat = d * n * big * big * 8
    per_op = {
        "matvec": (b * (mat + vec), 3 * d * n * r ** 4 * 8),
        "matmul": (2 * b * mat, 3 * d * n * n * r ** 4 * 8),
        "norm": (b * mat, 2 * mat),
        "round": (b * fat, 2 * fat),
        "gram": (b * vec, (b + 1) // 2 * d * n * r ** 3 * 8),
        "project": (b * fat + vec, 3 * n * big * max(big, r) * 8),
        "project_sum": (b * fat + vec, 3 * n * big * max(big, r) * 8),
        "project_matmul": (b * vec + mat + vec, 3 * n * n * r ** 4 * 8),
    }
    return per_op[cfg.op]


def plan_chunks(cfg: BenchConfig) -> int:
    """Chunk size for mapped ops; raises when the config cannot fit in memory."""
    inputs, per_member = _working_bytes(cfg)
    limit = cfg.memory_limit_mb * 2 ** 20
    if inputs + per_member > limit:
        raise InfeasibleConfigError(
            f"op {cfg.op!r} needs about {(inputs + per_member) / 2 ** 20:.0f} MiB, "
            f"above the {cfg.memory_limit_mb:.0f} MiB limit")
    if cfg.op not in _MAPPED:
        if inputs + cfg.batch_size * per_member > limit:
            raise InfeasibleConfigError(
                f"op {cfg.op!r} cannot be split across the batch and needs more "
                f"than the {cfg.memory_limit_mb:.0f} MiB limit")
        return cfg.batch_size
    budget = min(cfg.chunk_mb * 2 ** 20, limit - inputs)
    return int(max(1, min(cfg.batch_size, budget // max(per_member, 1))))


def _checksum(objs) -> str:
    h = hashlib.sha256()
    for obj in objs:
        for c in obj.cores:
            h.update(np.ascontiguousarray(c).tobytes())
    return h.hexdigest()[:16]


def make_inputs(cfg: BenchConfig) -> tuple:
    """Seeded inputs for ``cfg.op``; batch_size 1 yields single objects."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(4)
    b = cfg.batch_size if cfg.batch_size > 1 else None
    mshape = [(cfg.n, cfg.n)] * cfg.d
    vshape = [cfg.n] * cfg.d
    op = cfg.op
    if op == "matvec":
        return (core.random(mshape, cfg.rank, seeds[0], b),
                core.random(vshape, cfg.rank, seeds[1], b))
    if op == "matmul":
        return (core.random(mshape, cfg.rank, seeds[0], b),
                core.random(mshape, cfg.rank, seeds[1], b))
    if op == "norm":
        return (core.random(mshape, cfg.rank, seeds[0], b),)
    if op == "round":
        return (core.random(vshape, cfg.inflated_rank, seeds[0], b),)
    if op == "gram":
        return (core.random(vshape, cfg.rank, seeds[0], b),)
    if op in ("project", "project_sum"):
        return (core.random(vshape, cfg.inflated_rank, seeds[0], b),
                core.random(vshape, cfg.rank, seeds[1]))
    if op == "project_matmul":
        return (core.random(mshape, cfg.rank, seeds[0]),
                core.random(vshape, cfg.rank, seeds[1], b),
                core.random(vshape, cfg.rank, seeds[2]))
    raise InfeasibleConfigError(f"unknown op {op!r}")


def _kernel(cfg: BenchConfig):
    op, rank = cfg.op, cfg.rank
    if op == "matvec":
        return lambda a, x: linalg.matvec(a, x)
    if op == "matmul":
        return lambda a, b: linalg.matmul(a, b)
    if op == "norm":
        return lambda a: linalg.frobenius_norm(a)
    if op == "round":
        return lambda x: decomp.round(x, max_rank=rank)
    if op == "gram":
        if cfg.batch_size == 1:
            return lambda x: linalg.flat_inner(x, x)
        return lambda x: linalg.pairwise_flat_inner(x)
    if op == "project":
        return lambda x, base: riemannian.project(x, base)
    if op == "project_sum":
        return lambda x, base: riemannian.project_sum(x, base)
    if op == "project_matmul":
        return lambda a, c, base: riemannian.project_matmul(a, c, base)
    raise InfeasibleConfigError(f"unknown op {op!r}")


def _split(inputs, op, batch_size, chunk):
    """Argument tuples, one per chunk; only batch arguments are sliced."""
    if batch_size == 1 or chunk >= batch_size:
        return [inputs]
    calls = []
    for start in range(0, batch_size, chunk):
        part = slice(start, min(start + chunk, batch_size))
        calls.append(tuple(x[part] if isinstance(x, core.TensorTrainBatch) else x
                           for x in inputs))
    return calls


@contextlib.contextmanager
def _thread_limit(threads):
    if threads is None:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=threads):
        yield


def run_bench(cfg: BenchConfig) -> BenchReport:
    """Time one op; input generation and validation are excluded."""
    cfg.validate()
    chunk = plan_chunks(cfg)
    inputs = make_inputs(cfg)
    checksum = _checksum(inputs)
    kernel = _kernel(cfg)
    calls = _split(inputs, cfg.op, cfg.batch_size, chunk)

    def once():
        for args in calls:
            kernel(*args)

    times = []
    warm = 0
    with _thread_limit(cfg.threads):
        start = time.perf_counter()
        for _ in range(cfg.warmup):
            if warm and time.perf_counter() - start > cfg.max_time / 4:
                break
            once()
            warm += 1
        for _ in range(cfg.repeats):
            if times and time.perf_counter() - start > cfg.max_time:
                break
            t0 = time.perf_counter()
            once()
            times.append(time.perf_counter() - t0)
    per_object = np.asarray(times) * 1e3 / cfg.batch_size
    row = BenchRow(
        op=cfg.op,
        batch_size=cfg.batch_size,
        median_ms_per_object=float(np.median(per_object)),
        p10_ms_per_object=float(np.percentile(per_object, 10)),
        p90_ms_per_object=float(np.percentile(per_object, 90)),
        repeats=len(times),
        warmup=warm,
        chunk_size=chunk,
        input_checksum=checksum,
        peak_rss_mb=_peak_rss_mb(),
        config=dataclasses.asdict(cfg),
        host=host_metadata(),
    )
    return BenchReport([row])


def run_table(base: BenchConfig, ops=TABLE_OPS, batch_sizes=(1, 100)) -> BenchReport:
    """Every op in ``ops`` for each batch size, reusing the other settings."""
    report = BenchReport()
    for op in ops:
        for b in batch_sizes:
            report.extend(run_bench(dataclasses.replace(base, op=op, batch_size=b)))
    return report


# -- rendering --------------------------------------------------------------

def _rounded(obj):
    if isinstance(obj, float):
        return round(obj, 3)
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_rounded(v) for v in obj]
    return obj


def _op_order(op):
    return OPS.index(op) if op in OPS else len(OPS)


def _batch_label(b):
    return f"{b} object CPU" if b == 1 else f"{b} objects CPU"


CSV_FIELDS = ("op", "batch_size", "median_ms_per_object", "p10_ms_per_object",
              "p90_ms_per_object", "repeats", "warmup", "chunk_size", "d", "n",
              "rank", "inflated_rank", "seed", "input_checksum", "peak_rss_mb")


def render_report(report: BenchReport, fmt="markdown") -> str:
    """Render as ``markdown`` (reference-table layout), ``csv`` or ``json``."""
    if not report.rows:
        raise ValueError("refusing to render an empty benchmark report")
    if fmt == "json":
        rows = [_rounded(dataclasses.asdict(r)) for r in report.rows]
        return json.dumps({"rows": rows}, sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in report.rows:
            rec = dict(dataclasses.asdict(r), **{k: r.config[k] for k in
                                                 ("d", "n", "rank", "inflated_rank", "seed")})
            writer.writerow([f"{rec[k]:.3f}" if isinstance(rec[k], float) else rec[k]
                             for k in CSV_FIELDS])
        return buf.getvalue()
    if fmt == "markdown":
        return _markdown(report)
    raise ValueError(f"unknown report format {fmt!r}")


def _markdown(report):
    ops = sorted({r.op for r in report.rows}, key=lambda op: (_op_order(op), op))
    sizes = sorted({r.batch_size for r in report.rows})
    cell = {(r.op, r.batch_size): r for r in report.rows}
    lines = ["| Op | " + " | ".join(_batch_label(b) for b in sizes) + " |",
             "|---|" + "---:|" * len(sizes)]
    for op in ops:
        vals = [f"{cell[op, b].median_ms_per_object:.3f}" if (op, b) in cell else "-"
                for b in sizes]
        lines.append(f"| {op} | " + " | ".join(vals) + " |")
    first = report.rows[0].config
    lines += [
        "",
        "Median time in ms per object; batched timings are divided by the batch size.",
        f"d={first['d']}, n={first['n']}, rank={first['rank']}, "
        f"inflated_rank={first['inflated_rank']}, seed={first['seed']}.",
        "",
        "| Op | Batch | Median | p10 | p90 | Repeats | Input checksum |",
        "|---|---:|---:|---:|---:|---:|---|",
    ]
    for r in sorted(report.rows, key=lambda r: (_op_order(r.op), r.op, r.batch_size)):
        lines.append(f"| {r.op} | {r.batch_size} | {r.median_ms_per_object:.3f} | "
                     f"{r.p10_ms_per_object:.3f} | {r.p90_ms_per_object:.3f} | "
                     f"{r.repeats} | {r.input_checksum} |")
    return "\n".join(lines) + "\n"


def report_from_json(text: str) -> BenchReport:
    data = json.loads(text)
    return BenchReport([BenchRow(**row) for row in data["rows"]])
