"""Stage-level timing of the three operators.

Every repeat times the location/status table build, rule generation and the
compute stage separately with a monotonic clock.  One untimed warm-up run
precedes the repeats so JIT compilation is excluded.
"""
import statistics
import time

import numpy as np

from . import _accel, engine, oracle, rules
from .coords import DEFAULT_DENSE_THRESHOLD, build_location_table
from .tensor import FEATURE_DTYPE, GridShape, SparseTensor

OPERATORS = ("subm", "down", "inv")
STAGES = ("table_build", "rule_gen", "compute")

_STATS = {
    "type": "object",
    "required": ["median", "min", "max"],
    "properties": {k: {"type": "number", "minimum": 0} for k in ("median", "min", "max")},
}

BENCH_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "voxelconv bench report",
    "type": "object",
    "required": [
        "operator", "path", "backend", "lct", "n", "channels", "size", "repeats",
        "shape", "density", "workers", "stages", "total_median", "sites_per_second",
    ],
    "properties": {
        "operator": {"enum": list(OPERATORS)},
        "path": {"enum": list(engine.PATHS)},
        "backend": {"enum": ["numba", "numpy"]},
        "lct": {"enum": ["dense", "hash", "auto"]},
        "n": {"type": "integer", "minimum": 0},
        "channels": {"type": "integer", "minimum": 1},
        "size": {"type": "integer", "minimum": 1},
        "repeats": {"type": "integer", "minimum": 1},
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 4, "maxItems": 4},
        "density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "stages": {
            "type": "object",
            "required": list(STAGES),
            "properties": {s: _STATS for s in STAGES},
        },
        "total_median": {"type": "number", "minimum": 0},
        "sites_per_second": {"type": "number", "minimum": 0},
    },
}


def _stats(samples):
    return {"median": statistics.median(samples), "min": min(samples), "max": max(samples)}


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def _stages(op, t, w, size, path, backend, threshold):
    if op == "subm":
        lct, a = _timed(build_location_table, t, backend, threshold)
        oft, b = _timed(rules.build_subm_oft, t, lct, size)
        _, c = _timed(engine.subm_conv, t, oft, w, path)
    elif op == "down":
        stage, a = _timed(rules.downsample_stage_one, t, size, backend, threshold)
        (dmap, oft), b = _timed(rules.downsample_stage_two, stage, threshold)
        _, c = _timed(engine.sparse_conv, t, dmap, oft, w, path)
    else:
        fine, coarse = t
        lct, a = _timed(build_location_table, coarse, backend, threshold)
        imap, b = _timed(rules.build_inverse_map, fine, coarse, size, None, backend, threshold, lct)
        _, c = _timed(engine.inverse_conv, coarse, imap, None, w, path)
    return a, b, c


def run_bench(op="subm", path="optimized", shape=GridShape(64, 64, 64), density=0.05, channels=16,
              size=3, repeats=20, seed=0, backend="auto", dense_threshold=DEFAULT_DENSE_THRESHOLD):
    """Benchmark one operator and return a report dict matching :data:`BENCH_REPORT_SCHEMA`."""
    if op not in OPERATORS:
        raise ValueError(f"unknown operator {op!r}; choose from {OPERATORS}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    t = oracle.random_sparse_tensor(seed, shape, density, channels)
    w = oracle.random_weights(seed + 1, channels, channels, size)
    subject = t
    if op == "inv":
        dmap, _ = rules.build_downsample_oft(t, size, backend, dense_threshold)
        rng = np.random.default_rng(seed + 2)
        feat = rng.uniform(-1, 1, (dmap.out_count, channels)).astype(FEATURE_DTYPE)
        subject = (t, SparseTensor(dmap.out_shape, dmap.out_indices, feat, channels, _trusted=True))

    _stages(op, subject, w, size, path, backend, dense_threshold)
    samples = [_stages(op, subject, w, size, path, backend, dense_threshold) for _ in range(repeats)]
    per_stage = {name: _stats([s[i] for s in samples]) for i, name in enumerate(STAGES)}
    total = statistics.median(sum(s) for s in samples)
    return {
        "operator": op,
        "path": path,
        "backend": _accel.backend_name(),
        "lct": backend,
        "n": t.n,
        "channels": channels,
        "size": size,
        "repeats": repeats,
        "shape": [shape.max_x, shape.max_y, shape.max_z, shape.batches],
        "density": density,
        "workers": _accel.get_workers(),
        "stages": per_stage,
        "total_median": total,
        "sites_per_second": t.n / total if total > 0 else 0.0,
    }


def format_report(report):
    lines = [
        f"{report['operator']} path={report['path']} backend={report['backend']} "
        f"n={report['n']} C={report['channels']} size={report['size']} repeats={report['repeats']}"
    ]
    for name in STAGES:
        st = report["stages"][name]
        lines.append(f"  {name:<12} median {st['median'] * 1e3:9.3f} ms"
                     f"  min {st['min'] * 1e3:9.3f}  max {st['max'] * 1e3:9.3f}")
    lines.append(f"  throughput   {report['sites_per_second']:,.0f} sites/s")
    return "\n".join(lines)
