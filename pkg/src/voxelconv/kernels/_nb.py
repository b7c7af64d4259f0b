"""numba kernels.  Every function here has a twin in ``_np`` with the same
signature and bitwise-identical results."""
import numpy as np

from .._accel import njit, prange

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@njit(inline="always")
def _slot(key, bits):
    return np.int64((np.uint64(key) * _GOLDEN) >> np.uint64(64 - bits))


@njit(inline="always")
def _hash_find(hkeys, hvals, bits, key):
    mask = hkeys.size - 1
    s = _slot(key, bits)
    while True:
        k = hkeys[s]
        if k == key:
            return hvals[s]
        if k == -1:
            return -1
        s = (s + 1) & mask


@njit(inline="always")
def _hash_exchange(hkeys, hvals, bits, key, val):
    # insert-if-absent; returns the previous value (-1 when the slot was unclaimed)
    mask = hkeys.size - 1
    s = _slot(key, bits)
    while True:
        k = hkeys[s]
        if k == key:
            return hvals[s]
        if k == -1:
            hkeys[s] = key
            hvals[s] = val
            return -1
        s = (s + 1) & mask


@njit(inline="always")
def _find(dense, table, hkeys, hvals, bits, key):
    if dense:
        return table[key]
    return _hash_find(hkeys, hvals, bits, key)


@njit(parallel=True)
def dense_build(keys, vals, size):
    table = np.full(size, -1, np.int32)
    for i in prange(keys.size):
        table[keys[i]] = vals[i]
    return table


@njit
def hash_build(keys, vals, bits):
    hkeys = np.full(1 << bits, -1, np.int64)
    hvals = np.full(1 << bits, -1, np.int32)
    for i in range(keys.size):
        _hash_exchange(hkeys, hvals, bits, keys[i], vals[i])
    return hkeys, hvals


@njit(parallel=True)
def dense_lookup(table, keys):
    out = np.empty(keys.size, np.int32)
    for i in prange(keys.size):
        k = keys[i]
        out[i] = table[k] if 0 <= k < table.size else -1
    return out


@njit(parallel=True)
def hash_lookup(hkeys, hvals, bits, keys):
    out = np.empty(keys.size, np.int32)
    for i in prange(keys.size):
        k = keys[i]
        out[i] = _hash_find(hkeys, hvals, bits, k) if k >= 0 else -1
    return out


@njit
def dense_claim(ckeys, size):
    status = np.full(size, -1, np.int32)
    count = 0
    for i in range(ckeys.size):
        old = status[ckeys[i]]
        if old == -1:
            status[ckeys[i]] = i
            count += 1
    return status, count


@njit
def hash_claim(ckeys, bits):
    hkeys = np.full(1 << bits, -1, np.int64)
    hvals = np.full(1 << bits, -1, np.int32)
    count = 0
    for i in range(ckeys.size):
        if _hash_exchange(hkeys, hvals, bits, ckeys[i], i) == -1:
            count += 1
    return hkeys, hvals, count


@njit(parallel=True)
def subm_rules(indices, dims, k, dense, table, hkeys, hvals, bits):
    n = indices.shape[1]
    X, Y, Z = dims[0], dims[1], dims[2]
    vol = np.int64(X) * Y * Z
    kv = k * k * k
    r = (k - 1) // 2
    out = np.full((n, kv), -1, np.int32)
    for m in prange(n):
        base = np.int64(indices[0, m]) * vol
        px = indices[1, m]
        py = indices[2, m]
        pz = indices[3, m]
        for dx in range(k):
            qx = px + dx - r
            if qx < 0 or qx >= X:
                continue
            for dy in range(k):
                qy = py + dy - r
                if qy < 0 or qy >= Y:
                    continue
                for dz in range(k):
                    qz = pz + dz - r
                    if qz < 0 or qz >= Z:
                        continue
                    key = base + qx + np.int64(qy) * X + np.int64(qz) * X * Y
                    out[m, dx * k * k + dy * k + dz] = _find(dense, table, hkeys, hvals, bits, key)
    return out


@njit(parallel=True)
def cell_pairs(indices, s, cdims):
    # (coarse key, kernel offset) per input row
    n = indices.shape[1]
    CX, CY, CZ = cdims[0], cdims[1], cdims[2]
    cvol = np.int64(CX) * CY * CZ
    ckeys = np.empty(n, np.int64)
    koffs = np.empty(n, np.int32)
    for i in prange(n):
        x = indices[1, i]
        y = indices[2, i]
        z = indices[3, i]
        ox = x // s
        oy = y // s
        oz = z // s
        ckeys[i] = np.int64(indices[0, i]) * cvol + ox + np.int64(oy) * CX + np.int64(oz) * CX * CY
        koffs[i] = (x - ox * s) * s * s + (y - oy * s) * s + (z - oz * s)
    return ckeys, koffs


@njit(parallel=True)
def scatter_rules(out_rows, koffs, m_out, kv):
    out = np.full((m_out, kv), -1, np.int32)
    for i in prange(out_rows.size):
        out[out_rows[i], koffs[i]] = i
    return out


@njit
def conv_reference(feat, rules, w):
    # loop nest in the order of the textbook algorithm; sequential on purpose
    m, kv = rules.shape
    co = w.shape[0]
    ci = w.shape[2]
    out = np.empty((m, co), np.float32)
    for i in range(m):
        for o in range(co):
            s = np.float32(0.0)
            for k in range(kv):
                nidx = rules[i, k]
                if nidx != -1:
                    for c in range(ci):
                        s += feat[nidx, c] * w[o, k, c]
            out[i, o] = s
    return out


@njit(parallel=True)
def conv_optimized(feat, rules, w, block_rows, oc_tile):
    m, kv = rules.shape
    co = w.shape[0]
    ci = w.shape[2]
    out = np.empty((m, co), np.float32)
    n_blocks = (m + block_rows - 1) // block_rows
    n_tiles = (co + oc_tile - 1) // oc_tile
    for job in prange(n_blocks * n_tiles):
        b = job // n_tiles
        oc0 = (job % n_tiles) * oc_tile
        t = min(oc_tile, co - oc0)
        # weight tile staged once per worker group, laid out [koff][ic][oc]
        tile = np.empty((kv, ci, t), np.float32)
        for k in range(kv):
            for c in range(ci):
                for j in range(t):
                    tile[k, c, j] = w[oc0 + j, k, c]
        acc = np.empty(t, np.float32)
        for i in range(b * block_rows, min(m, (b + 1) * block_rows)):
            acc[:] = 0.0
            for k in range(kv):
                nidx = rules[i, k]
                if nidx != -1:
                    for c in range(ci):
                        f = feat[nidx, c]
                        for j in range(t):
                            acc[j] += f * tile[k, c, j]
            for j in range(t):
                out[i, oc0 + j] = acc[j]
    return out


@njit
def inverse_reference(feat, rows, koffs, w):
    n = rows.size
    co = w.shape[0]
    ci = w.shape[2]
    out = np.empty((n, co), np.float32)
    for p in range(n):
        r = rows[p]
        k = koffs[p]
        for o in range(co):
            s = np.float32(0.0)
            for c in range(ci):
                s += feat[r, c] * w[o, k, c]
            out[p, o] = s
    return out


@njit(parallel=True)
def inverse_optimized(feat, rows, koffs, w, block_rows):
    n = rows.size
    co, kv, ci = w.shape
    tile = np.empty((kv, ci, co), np.float32)
    for k in range(kv):
        for c in range(ci):
            for j in range(co):
                tile[k, c, j] = w[j, k, c]
    out = np.empty((n, co), np.float32)
    n_blocks = (n + block_rows - 1) // block_rows
    for b in prange(n_blocks):
        acc = np.empty(co, np.float32)
        for p in range(b * block_rows, min(n, (b + 1) * block_rows)):
            r = rows[p]
            k = koffs[p]
            acc[:] = 0.0
            for c in range(ci):
                f = feat[r, c]
                for j in range(co):
                    acc[j] += f * tile[k, c, j]
            for j in range(co):
                out[p, j] = acc[j]
    return out
