"""Dense brute-force references and a seeded equivalence harness.

The reference computations here use only the core tensor types; they never
call into the location-table, rule-generation or compute code they check.
"""
from dataclasses import dataclass, field

import numpy as np

from . import engine, rules
from .errors import ShapeMismatch, VoxelConvError
from .tensor import COORD_DTYPE, FEATURE_DTYPE, DenseGrid, GridShape, SparseTensor, to_dense


@dataclass
class Failure:
    seed: object
    site: tuple
    channel: int
    expected: float
    actual: float
    reason: str = "value"


@dataclass
class EquivalenceReport:
    cases_run: int = 0
    cases_passed: int = 0
    max_abs_err: float = 0.0
    first_failure: Failure = None
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.cases_passed == self.cases_run

    def merge(self, other):
        self.cases_run += other.cases_run
        self.cases_passed += other.cases_passed
        self.max_abs_err = max(self.max_abs_err, other.max_abs_err)
        if self.first_failure is None:
            self.first_failure = other.first_failure
        self.notes.extend(other.notes)
        return self

    def summary(self):
        line = (f"{self.cases_passed}/{self.cases_run} passed, "
                f"max_abs_err={self.max_abs_err:.3e}")
        if self.first_failure is not None:
            f = self.first_failure
            line += (f"; first failure seed={f.seed} site={f.site} channel={f.channel} "
                     f"expected={f.expected} actual={f.actual} ({f.reason})")
        return line


def _pads(padding):
    if np.isscalar(padding):
        return [(int(padding), int(padding))] * 3
    out = []
    for p in padding:
        out.append((int(p), int(p)) if np.isscalar(p) else (int(p[0]), int(p[1])))
    if len(out) != 3:
        raise ValueError(f"padding needs 3 axes, got {padding!r}")
    return out


def dense_conv(g, w, stride=1, padding=0):
    """Textbook strided cross-correlation over a dense grid, in float64.

    ``padding`` is an int, three ints, or three ``(low, high)`` pairs of
    zero padding.  Output extent per axis is ``(E + low + high - k) // s + 1``.
    """
    values = np.asarray(w.values, dtype=np.float64)
    co, kv, ci = values.shape
    k = round(kv ** (1 / 3))
    if k ** 3 != kv or ci != g.channels:
        raise ShapeMismatch(f"weights {values.shape} incompatible with {g.channels}-channel grid")
    s = int(stride)
    pads = _pads(padding)
    grid = np.pad(np.asarray(g.values, dtype=np.float64), [(0, 0), *pads, (0, 0)])
    ext = [(e + lo + hi - k) // s + 1 for e, (lo, hi) in zip(g.shape.extent, pads)]
    if min(ext) < 1:
        raise ShapeMismatch(f"kernel {k} larger than padded grid {g.shape}")
    out = np.zeros((g.shape.batches, *ext, co))
    ox, oy, oz = ext
    for dx in range(k):
        for dy in range(k):
            for dz in range(k):
                window = grid[:, dx:dx + s * (ox - 1) + 1:s,
                              dy:dy + s * (oy - 1) + 1:s,
                              dz:dz + s * (oz - 1) + 1:s]
                out += window @ values[:, dx * k * k + dy * k + dz, :].T
    return DenseGrid(GridShape(*ext, g.shape.batches), co, out)


def random_sparse_tensor(seed, shape, density, channels):
    """``round(density · sites)`` distinct random sites (at least one),
    canonical order, features uniform in [-1, 1]."""
    if not 0 < density <= 1:
        raise ValueError(f"density must be in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    count = max(1, int(round(density * shape.size)))
    keys = np.sort(rng.choice(shape.size, size=count, replace=False))
    b, z, y, x = np.unravel_index(keys, (shape.batches, shape.max_z, shape.max_y, shape.max_x))
    indices = np.stack([b, x, y, z]).astype(COORD_DTYPE)
    features = rng.uniform(-1.0, 1.0, size=(count, channels)).astype(FEATURE_DTYPE)
    return SparseTensor(shape, indices, features, channels)


def random_weights(seed, out_channels, in_channels, kernel):
    rng = np.random.default_rng(seed)
    values = rng.uniform(-1.0, 1.0, size=(out_channels, kernel ** 3, in_channels))
    return engine.WeightTensor(values.astype(FEATURE_DTYPE))


def _compare(expected, actual, sites, tol, seed):
    report = EquivalenceReport(cases_run=1)
    if expected.shape != actual.shape:
        report.first_failure = Failure(seed, (), -1, float(expected.size), float(actual.size), "shape")
        return report
    if expected.size == 0:
        report.cases_passed = 1
        return report
    err = np.abs(expected - actual.astype(np.float64))
    report.max_abs_err = float(err.max())
    bad = np.argwhere(~(err <= tol))
    if bad.size == 0:
        report.cases_passed = 1
    else:
        r, c = (int(v) for v in bad[0])
        report.first_failure = Failure(
            seed, tuple(int(v) for v in sites[:, r]), c, float(expected[r, c]), float(actual[r, c])
        )
    return report


def _sample(grid, indices):
    b, x, y, z = indices
    return grid.values[b, x, y, z]


def check_subm(t, w, k=None, tol=1e-4, *, path="optimized", backend="auto", seed=None, engine_fn=None):
    """Compare submanifold convolution with the zero-padded dense oracle at ``t``'s sites."""
    k = k or w.kernel_size
    run = engine_fn or (lambda: engine.submanifold(t, w, path, backend))
    out = run()
    if not np.array_equal(out.indices, t.indices):
        rep = EquivalenceReport(cases_run=1)
        rep.first_failure = Failure(seed, (), -1, t.n, out.n, "index set")
        return rep
    expected = _sample(dense_conv(to_dense(t), w, 1, (k - 1) // 2), t.indices)
    return _compare(expected, out.features, t.indices, tol, seed)


def occupied_cells(indices, s):
    """Distinct (batch, x//s, y//s, z//s) cells, sorted by batch then z, y, x."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape[1] == 0:
        return np.zeros((4, 0), np.int64)
    cells = np.vstack([idx[:1], idx[1:] // s])
    cells = np.unique(cells.T, axis=0).T
    order = np.lexsort((cells[1], cells[2], cells[3], cells[0]))
    return cells[:, order]


def check_downsample(t, w, s, tol=1e-4, *, path="optimized", backend="auto", seed=None):
    """Compare a stride-``s`` convolution with the dense oracle at occupied cells,
    and the unique-output count with a set-based count."""
    report = EquivalenceReport(cases_run=1)
    cells = occupied_cells(t.indices, s)
    count, _ = rules.count_unique_outputs(t, s, backend)
    if count != cells.shape[1]:
        report.first_failure = Failure(seed, (), -1, cells.shape[1], count, "unique count")
        return report
    out = engine.downsample(t, w, path, backend)
    got = out.indices.astype(np.int64)
    order = np.lexsort((got[1], got[2], got[3], got[0]))
    if not np.array_equal(got[:, order], cells):
        report.first_failure = Failure(seed, (), -1, cells.shape[1], out.n, "coarse index set")
        return report
    # zero-extend so partial cells at the high edge are covered
    ext = [-(-e // s) * s - e for e in t.shape.extent]
    dense = dense_conv(to_dense(t), w, s, [(0, e) for e in ext])
    expected = _sample(dense, cells)
    return _compare(expected, out.features[order], cells, tol, seed)


def inverse_reference(fine_indices, coarse, w, s):
    """Per-site product: parent row's features against the kernel slice at the
    site's offset within its cell.  Plain dict lookups, float64."""
    fine = np.asarray(fine_indices, dtype=np.int64)
    parents = {tuple(int(v) for v in coarse.indices[:, r]): r for r in range(coarse.n)}
    rows, koffs = [], []
    for b, x, y, z in fine.T:
        key = (int(b), int(x) // s, int(y) // s, int(z) // s)
        if key not in parents:
            raise KeyError(key)
        rows.append(parents[key])
        koffs.append((x % s) * s * s + (y % s) * s + (z % s))
    values = np.asarray(w.values, dtype=np.float64)
    feat = np.asarray(coarse.features, dtype=np.float64)
    out = np.zeros((fine.shape[1], values.shape[0]))
    for p, (r, kk) in enumerate(zip(rows, koffs)):
        out[p] = values[:, kk, :] @ feat[r]
    return out


def check_inverse(t, w, s, tol=1e-4, *, path="optimized", backend="auto", seed=None):
    """Downsample ``t``'s index set, attach random coarse features, upsample
    back, and compare with :func:`inverse_reference`.  Also checks that the
    inverse map reproduces the downsample pair table exactly."""
    report = EquivalenceReport(cases_run=1)
    dmap, _ = rules.build_downsample_oft(t, s, backend)
    rng = np.random.default_rng(0 if seed is None else seed)
    feat = rng.uniform(-1, 1, size=(dmap.out_count, w.in_channels)).astype(FEATURE_DTYPE)
    coarse = SparseTensor(dmap.out_shape, dmap.out_indices, feat, w.in_channels)
    try:
        imap = rules.build_inverse_map(t, coarse, s, backend=backend)
    except VoxelConvError as exc:
        report.first_failure = Failure(seed, (), -1, 0, 0, f"inverse map: {exc}")
        return report
    if not (np.array_equal(imap.coarse_row, dmap.out_row)
            and np.array_equal(imap.kernel_offset, dmap.kernel_offset)):
        report.first_failure = Failure(seed, (), -1, 0, 0, "round trip pair table")
        return report
    out = engine.inverse_conv(coarse, imap, t.indices, w, path)
    if not np.array_equal(out.indices, t.indices):
        report.first_failure = Failure(seed, (), -1, t.n, out.n, "fine index set")
        return report
    expected = inverse_reference(t.indices, coarse, w, s)
    return _compare(expected, out.features, t.indices, tol, seed)


# seeded case generation


@dataclass(frozen=True)
class Case:
    seed: int
    mode: str
    tensor: SparseTensor
    weights: object
    size: int  # kernel size or stride


def random_case(seed, mode, max_extent=32):
    """Randomized acceptance case: extents in [4, max_extent], 1-2 batches,
    density 1-10 %, channels in {1, 4, 8}, k in {1, 3, 5} or s in {2, 3, 4}."""
    rng = np.random.default_rng([seed, 7919])
    ext = rng.integers(4, max_extent + 1, size=3)
    shape = GridShape(*(int(e) for e in ext), int(rng.integers(1, 3)))
    density = float(rng.uniform(0.01, 0.10))
    cin, cout = (int(c) for c in rng.choice([1, 4, 8], size=2))
    size = int(rng.choice([1, 3, 5] if mode == "subm" else [2, 3, 4]))
    t = random_sparse_tensor(seed, shape, density, cin)
    return Case(seed, mode, t, random_weights(seed + 1, cout, cin, size), size)


def fixed_case(seed, mode, shape, density, channels, size=None):
    """Case with caller-chosen grid; kernel size or stride cycles with the seed
    unless ``size`` is given."""
    if size is None:
        sizes = (1, 3, 5) if mode == "subm" else (2, 3, 4)
        size = sizes[seed % 3]
    t = random_sparse_tensor(seed, shape, density, channels)
    return Case(seed, mode, t, random_weights(seed + 1, channels, channels, size), size)


CHECKS = {
    "subm": lambda c, tol, **kw: check_subm(c.tensor, c.weights, c.size, tol, seed=c.seed, **kw),
    "down": lambda c, tol, **kw: check_downsample(c.tensor, c.weights, c.size, tol, seed=c.seed, **kw),
    "inv": lambda c, tol, **kw: check_inverse(c.tensor, c.weights, c.size, tol, seed=c.seed, **kw),
}


def run_suite(cases, tol=1e-4, **kwargs):
    report = EquivalenceReport()
    for case in cases:
        report.merge(CHECKS[case.mode](case, tol, **kwargs))
    return report
