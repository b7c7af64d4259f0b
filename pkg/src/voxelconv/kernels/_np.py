"""Pure-numpy fallbacks for the kernels in ``_nb``.

Accumulation order matches the numba kernels element for element (kernel
offset outer, input channel inner, separate float32 multiply and add), so
outputs agree bitwise.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import _accel

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _slots(keys, bits):
    return ((keys.astype(np.uint64) * _GOLDEN) >> np.uint64(64 - bits)).astype(np.int64)


# Interpreter overhead, not cache size, bounds the useful block size here.
_MIN_BLOCK_ROWS = 8192


def _row_blocks(n, block_rows):
    block_rows = max(block_rows, _MIN_BLOCK_ROWS)
    return [(lo, min(n, lo + block_rows)) for lo in range(0, n, block_rows)]


def _run_blocks(fn, blocks):
    workers = _accel.get_workers()
    if workers <= 1 or len(blocks) <= 1:
        for lo, hi in blocks:
            fn(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda b: fn(*b), blocks))


def dense_build(keys, vals, size):
    table = np.full(size, -1, np.int32)
    table[keys] = vals
    return table


def _hash_insert(hkeys, hvals, bits, keys, vals):
    # vectorized linear probing; contested empty slots go to the lowest row
    mask = hkeys.size - 1
    home = _slots(keys, bits)
    pending = np.arange(keys.size)
    probe = np.zeros(keys.size, np.int64)
    while pending.size:
        s = (home[pending] + probe[pending]) & mask
        empty = hkeys[s] == -1
        cand, cs = pending[empty], s[empty]
        u, first = np.unique(cs, return_index=True)
        hkeys[u] = keys[cand[first]]
        hvals[u] = vals[cand[first]]
        settled = hkeys[s] == keys[pending]
        probe[pending[~settled]] += 1
        pending = pending[~settled]


def hash_build(keys, vals, bits):
    hkeys = np.full(1 << bits, -1, np.int64)
    hvals = np.full(1 << bits, -1, np.int32)
    _hash_insert(hkeys, hvals, bits, keys, vals)
    return hkeys, hvals


def dense_lookup(table, keys):
    out = np.full(keys.size, -1, np.int32)
    ok = (keys >= 0) & (keys < table.size)
    out[ok] = table[keys[ok]]
    return out


def hash_lookup(hkeys, hvals, bits, keys):
    mask = hkeys.size - 1
    out = np.full(keys.size, -1, np.int32)
    pending = np.flatnonzero(keys >= 0)
    s = _slots(keys[pending], bits)
    while pending.size:
        found = hkeys[s]
        hit = found == keys[pending]
        out[pending[hit]] = hvals[s[hit]]
        more = ~hit & (found != -1)
        pending, s = pending[more], (s[more] + 1) & mask
    return out


def dense_claim(ckeys, size):
    uniq, first = np.unique(ckeys, return_index=True)
    status = np.full(size, -1, np.int32)
    status[uniq] = first
    return status, uniq.size


def hash_claim(ckeys, bits):
    uniq, first = np.unique(ckeys, return_index=True)
    hkeys, hvals = hash_build(uniq, first.astype(np.int32), bits)
    return hkeys, hvals, uniq.size


def subm_rules(indices, dims, k, dense, table, hkeys, hvals, bits):
    n = indices.shape[1]
    X, Y, Z = (int(d) for d in dims)
    r = (k - 1) // 2
    idx = indices.astype(np.int64)
    base = idx[0] * (X * Y * Z)
    out = np.full((n, k ** 3), -1, np.int32)
    for dx in range(k):
        qx = idx[1] + dx - r
        for dy in range(k):
            qy = idx[2] + dy - r
            for dz in range(k):
                qz = idx[3] + dz - r
                ok = (qx >= 0) & (qx < X) & (qy >= 0) & (qy < Y) & (qz >= 0) & (qz < Z)
                keys = np.where(ok, base + qx + qy * X + qz * (X * Y), -1)
                col = dense_lookup(table, keys) if dense else hash_lookup(hkeys, hvals, bits, keys)
                out[:, dx * k * k + dy * k + dz] = col
    return out


def cell_pairs(indices, s, cdims):
    CX, CY, CZ = (int(d) for d in cdims)
    idx = indices.astype(np.int64)
    o = idx[1:] // s
    off = idx[1:] - o * s
    ckeys = idx[0] * (CX * CY * CZ) + o[0] + o[1] * CX + o[2] * (CX * CY)
    koffs = (off[0] * s * s + off[1] * s + off[2]).astype(np.int32)
    return ckeys, koffs


def scatter_rules(out_rows, koffs, m_out, kv):
    out = np.full((m_out, kv), -1, np.int32)
    out[out_rows, koffs] = np.arange(out_rows.size, dtype=np.int32)
    return out


def _gather(feat, idx):
    valid = idx >= 0
    g = feat[np.where(valid, idx, 0)]
    g[~valid] = 0.0
    return g


def conv_reference(feat, rules, w):
    m, kv = rules.shape
    co, _, ci = w.shape
    acc = np.zeros((m, co), np.float32)
    for k in range(kv):
        valid = rules[:, k] >= 0
        idx = np.where(valid, rules[:, k], 0)
        for c in range(ci):
            col = np.where(valid, feat[idx, c], np.float32(0.0))
            acc += col[:, None] * w[:, k, c][None, :]
    return acc


def conv_optimized(feat, rules, w, block_rows, oc_tile):
    m, kv = rules.shape
    co, _, ci = w.shape
    out = np.empty((m, co), np.float32)
    tiles = [
        (oc0, np.ascontiguousarray(w[oc0:oc0 + oc_tile].transpose(1, 2, 0)))
        for oc0 in range(0, co, oc_tile)
    ]

    def block(lo, hi):
        rows = rules[lo:hi]
        gathered = [_gather(feat, rows[:, k]) for k in range(kv)]
        for oc0, tile in tiles:
            acc = np.zeros((hi - lo, tile.shape[2]), np.float32)
            for k in range(kv):
                g = gathered[k]
                for c in range(ci):
                    acc += g[:, c:c + 1] * tile[k, c]
            out[lo:hi, oc0:oc0 + tile.shape[2]] = acc

    _run_blocks(block, _row_blocks(m, block_rows))
    return out


def inverse_reference(feat, rows, koffs, w):
    co, _, ci = w.shape
    acc = np.zeros((rows.size, co), np.float32)
    for c in range(ci):
        acc += feat[rows, c][:, None] * w[:, koffs, c].T
    return acc


def inverse_optimized(feat, rows, koffs, w, block_rows):
    co, kv, ci = w.shape
    tile = np.ascontiguousarray(w.transpose(1, 2, 0))
    out = np.empty((rows.size, co), np.float32)

    def block(lo, hi):
        g = feat[rows[lo:hi]]
        t = tile[koffs[lo:hi]]
        acc = np.zeros((hi - lo, co), np.float32)
        for c in range(ci):
            acc += g[:, c:c + 1] * t[:, c]
        out[lo:hi] = acc

    _run_blocks(block, _row_blocks(rows.size, block_rows))
    return out
