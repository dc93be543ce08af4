# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every function here has a pure-Python twin in ``_purekernels`` with the same
signature and results; ``bifrost.kernels`` picks one at import time.
"""

import numpy as np

from libc.stdint cimport int32_t, int64_t, uint8_t, uint16_t, uint32_t, uint64_t
from libc.stdlib cimport calloc, free, malloc, realloc
from libc.string cimport memcpy, memset

ctypedef fused sym_t:
    uint8_t
    uint16_t
    uint32_t


# ---------------------------------------------------------------------------
# ChaCha20 (RFC 8439 block function, all-zero nonce)
# ---------------------------------------------------------------------------

cdef inline uint32_t _rotl(uint32_t v, int c) noexcept nogil:
    return <uint32_t>((v << c) | (v >> (32 - c)))


cdef inline void _qr(uint32_t* x, int a, int b, int c, int d) noexcept nogil:
    x[a] += x[b]; x[d] ^= x[a]; x[d] = _rotl(x[d], 16)
    x[c] += x[d]; x[b] ^= x[c]; x[b] = _rotl(x[b], 12)
    x[a] += x[b]; x[d] ^= x[a]; x[d] = _rotl(x[d], 8)
    x[c] += x[d]; x[b] ^= x[c]; x[b] = _rotl(x[b], 7)


cdef void _chacha_block(const uint32_t* key, uint32_t counter, uint8_t* out) noexcept nogil:
    cdef uint32_t s[16]
    cdef uint32_t x[16]
    cdef int i
    cdef uint32_t w
    s[0] = 0x61707865u
    s[1] = 0x3320646eu
    s[2] = 0x79622d32u
    s[3] = 0x6b206574u
    for i in range(8):
        s[4 + i] = key[i]
    s[12] = counter
    s[13] = 0
    s[14] = 0
    s[15] = 0
    for i in range(16):
        x[i] = s[i]
    for i in range(10):
        _qr(x, 0, 4, 8, 12)
        _qr(x, 1, 5, 9, 13)
        _qr(x, 2, 6, 10, 14)
        _qr(x, 3, 7, 11, 15)
        _qr(x, 0, 5, 10, 15)
        _qr(x, 1, 6, 11, 12)
        _qr(x, 2, 7, 8, 13)
        _qr(x, 3, 4, 9, 14)
    for i in range(16):
        w = x[i] + s[i]
        out[4 * i] = w & 0xFF
        out[4 * i + 1] = (w >> 8) & 0xFF
        out[4 * i + 2] = (w >> 16) & 0xFF
        out[4 * i + 3] = (w >> 24) & 0xFF


cdef void _load_key(const uint8_t* kb, uint32_t* key) noexcept nogil:
    cdef int i
    for i in range(8):
        key[i] = (<uint32_t>kb[4 * i]
                  | (<uint32_t>kb[4 * i + 1] << 8)
                  | (<uint32_t>kb[4 * i + 2] << 16)
                  | (<uint32_t>kb[4 * i + 3] << 24))


def chacha20_keystream(const uint8_t[::1] key, Py_ssize_t nbytes, uint32_t counter=0):
    """Return ``nbytes`` of keystream for a 32-byte key, starting at block ``counter``."""
    if key.shape[0] != 32:
        raise ValueError("ChaCha20 key must be 32 bytes")
    if nbytes < 0:
        raise ValueError("nbytes must be non-negative")
    cdef uint32_t k[8]
    cdef uint8_t block[64]
    cdef Py_ssize_t done = 0, take
    out = bytearray(nbytes)
    cdef uint8_t[::1] view = out
    _load_key(&key[0], k)
    while done < nbytes:
        _chacha_block(k, counter, block)
        counter += 1
        take = nbytes - done
        if take > 64:
            take = 64
        memcpy(&view[done], block, take)
        done += take
    return bytes(out)


cdef struct Stream:
    uint32_t key[8]
    uint32_t counter
    uint8_t buf[64]
    int pos


cdef inline uint8_t _next_byte(Stream* st) noexcept nogil:
    if st.pos == 64:
        _chacha_block(st.key, st.counter, st.buf)
        st.counter += 1
        st.pos = 0
    st.pos += 1
    return st.buf[st.pos - 1]


cdef uint64_t _uniform(Stream* st, uint64_t r) noexcept nogil:
    cdef uint64_t span = 256
    cdef int nb = 1, i
    cdef uint64_t limit, v
    while span < r:
        span <<= 8
        nb += 1
    limit = span - span % r
    while True:
        v = 0
        for i in range(nb):
            v = (v << 8) | _next_byte(st)
        if v < limit:
            return v % r


def derive_positions_batch(const uint8_t[:, ::1] keys, Py_ssize_t n_org, Py_ssize_t n_del):
    """Distinct positions in draw order, one row per 32-byte stream key."""
    if n_del < 0 or n_del >= n_org:
        raise ValueError("need 0 <= n_del < n_org")
    if keys.shape[0] > 0 and keys.shape[1] != 32:
        raise ValueError("stream keys must be 32 bytes")
    cdef Py_ssize_t rows = keys.shape[0], r, k
    out = np.empty((rows, n_del), dtype=np.int32)
    cdef int32_t[:, ::1] pos = out
    cdef uint8_t* seen = <uint8_t*>calloc(n_org, 1)
    cdef Stream st
    cdef uint64_t v
    if seen == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(rows):
                _load_key(&keys[r, 0], st.key)
                st.counter = 0
                st.pos = 64
                k = 0
                while k < n_del:
                    v = _uniform(&st, <uint64_t>n_org)
                    if seen[v]:
                        continue
                    seen[v] = 1
                    pos[r, k] = <int32_t>v
                    k += 1
                for k in range(n_del):
                    seen[pos[r, k]] = 0
    finally:
        free(seen)
    return out


# ---------------------------------------------------------------------------
# Deletion transform and its inverse, batched over chunks
# ---------------------------------------------------------------------------

def delete_batch(const sym_t[:, ::1] chunks, const int32_t[:, ::1] positions):
    cdef Py_ssize_t rows = chunks.shape[0], n_org = chunks.shape[1]
    cdef Py_ssize_t n_del = positions.shape[1]
    cdef Py_ssize_t r, i, k, w
    cdef int32_t p
    if positions.shape[0] != rows:
        raise ValueError("one position row per chunk required")
    dtype = np.asarray(chunks).dtype
    bases_arr = np.empty((rows, n_org - n_del), dtype=dtype)
    values_arr = np.empty((rows, n_del), dtype=dtype)
    cdef sym_t[:, ::1] bases = bases_arr
    cdef sym_t[:, ::1] values = values_arr
    cdef uint8_t* mark = <uint8_t*>calloc(n_org if n_org else 1, 1)
    if mark == NULL:
        raise MemoryError()
    cdef bint bad = False
    try:
        with nogil:
            for r in range(rows):
                for k in range(n_del):
                    p = positions[r, k]
                    if p < 0 or p >= n_org or mark[p]:
                        bad = True
                        break
                    mark[p] = 1
                    values[r, k] = chunks[r, p]
                if bad:
                    break
                w = 0
                for i in range(n_org):
                    if mark[i]:
                        mark[i] = 0
                    else:
                        bases[r, w] = chunks[r, i]
                        w += 1
    finally:
        free(mark)
    if bad:
        raise ValueError("positions must be distinct and inside the chunk")
    return bases_arr, values_arr


def reinsert_batch(const sym_t[:, ::1] bases, const int32_t[:, ::1] positions, const sym_t[:, ::1] values):
    cdef Py_ssize_t rows = bases.shape[0], n_base = bases.shape[1]
    cdef Py_ssize_t n_del = values.shape[1]
    cdef Py_ssize_t n_org = n_base + n_del
    cdef Py_ssize_t r, i, k, w
    cdef int32_t p
    if positions.shape[0] != rows or values.shape[0] != rows:
        raise ValueError("row counts differ")
    if positions.shape[1] != n_del:
        raise ValueError("positions and values differ in length")
    out_arr = np.empty((rows, n_org), dtype=np.asarray(bases).dtype)
    cdef sym_t[:, ::1] out = out_arr
    cdef uint8_t* mark = <uint8_t*>calloc(n_org if n_org else 1, 1)
    if mark == NULL:
        raise MemoryError()
    cdef bint bad = False
    try:
        with nogil:
            for r in range(rows):
                for k in range(n_del):
                    p = positions[r, k]
                    if p < 0 or p >= n_org or mark[p]:
                        bad = True
                        break
                    mark[p] = 1
                    out[r, p] = values[r, k]
                if bad:
                    break
                w = 0
                for i in range(n_org):
                    if mark[i]:
                        mark[i] = 0
                    else:
                        out[r, i] = bases[r, w]
                        w += 1
    finally:
        free(mark)
    if bad:
        raise ValueError("positions must be distinct and inside the chunk")
    return out_arr


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------

def hamming(const sym_t[::1] a, const sym_t[::1] b):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef Py_ssize_t d = 0
    if b.shape[0] != n:
        raise ValueError("length mismatch")
    for i in range(n):
        if a[i] != b[i]:
            d += 1
    return d


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil
    int __builtin_ctzll(unsigned long long) nogil


def swap_change_upper(const int32_t[::1] a, const int32_t[::1] b, bint want_path):
    """Linear DP with non-overlapping adjacent swaps; an upper bound on the exact distance."""
    cdef Py_ssize_t n = a.shape[0], i
    if b.shape[0] != n:
        raise ValueError("length mismatch")
    cdef int32_t* d = <int32_t*>malloc((n + 1) * sizeof(int32_t))
    cdef uint8_t* sw = <uint8_t*>malloc(n + 1)
    cdef int32_t v
    if d == NULL or sw == NULL:
        free(d); free(sw)
        raise MemoryError()
    with nogil:
        d[0] = 0
        sw[0] = 0
        for i in range(1, n + 1):
            d[i] = d[i - 1] + (1 if a[i - 1] != b[i - 1] else 0)
            sw[i] = 0
            if i >= 2 and a[i - 2] != a[i - 1] and a[i - 2] == b[i - 1] and a[i - 1] == b[i - 2]:
                v = d[i - 2] + 1
                if v < d[i]:
                    d[i] = v
                    sw[i] = 1
    result = d[n]
    path = None
    if want_path:
        path = np.arange(n, dtype=np.int32)
        i = n
        while i > 0:
            if sw[i]:
                path[i - 1] = i - 2
                path[i - 2] = i - 1
                i -= 2
            else:
                i -= 1
    free(d)
    free(sw)
    return result, path


cdef inline int _popcount(uint64_t x) noexcept nogil:
    return __builtin_popcountll(x)


cdef inline int _ctz(uint64_t x) noexcept nogil:
    return __builtin_ctzll(x)


cdef int32_t* _suffix_lower_bounds(const int32_t* a, const int32_t* b, Py_ssize_t n, Py_ssize_t sigma) noexcept nogil:
    # lb[f*(n+1)+p]: symbols of b[p:] that a[f:] cannot supply, i.e. forced substitutions
    cdef int32_t* lb = <int32_t*>malloc((n + 1) * (n + 1) * sizeof(int32_t))
    cdef int32_t* ca = <int32_t*>calloc(sigma + 1, sizeof(int32_t))
    cdef int32_t* cb = <int32_t*>calloc(sigma + 1, sizeof(int32_t))
    cdef Py_ssize_t f, p
    cdef int32_t cur, s
    if lb == NULL or ca == NULL or cb == NULL:
        free(lb); free(ca); free(cb)
        return NULL
    f = n
    while f >= 0:
        if f < n:
            ca[a[f]] += 1
        memset(cb, 0, (sigma + 1) * sizeof(int32_t))
        cur = 0
        lb[f * (n + 1) + n] = 0
        p = n - 1
        while p >= 0:
            s = b[p]
            cb[s] += 1
            if cb[s] > ca[s]:
                cur += 1
            lb[f * (n + 1) + p] = cur
            p -= 1
        f -= 1
    free(ca)
    free(cb)
    return lb


cdef struct Layer:
    uint64_t* mask
    int32_t* cost
    int32_t* parent
    int32_t* src
    Py_ssize_t size
    Py_ssize_t cap


cdef int _push(Layer* L, uint64_t mask, int32_t cost, int32_t parent, int32_t src) noexcept nogil:
    cdef Py_ssize_t ncap
    if L.size == L.cap:
        ncap = L.cap * 2 if L.cap else 1024
        L.mask = <uint64_t*>realloc(L.mask, ncap * sizeof(uint64_t))
        L.cost = <int32_t*>realloc(L.cost, ncap * sizeof(int32_t))
        L.parent = <int32_t*>realloc(L.parent, ncap * sizeof(int32_t))
        L.src = <int32_t*>realloc(L.src, ncap * sizeof(int32_t))
        if L.mask == NULL or L.cost == NULL or L.parent == NULL or L.src == NULL:
            return -1
        L.cap = ncap
    L.mask[L.size] = mask
    L.cost[L.size] = cost
    L.parent[L.size] = parent
    L.src[L.size] = src
    L.size += 1
    return 0


cdef inline uint64_t _mix(uint64_t x) noexcept nogil:
    x ^= x >> 33
    x *= 0xff51afd7ed558ccdULL
    x ^= x >> 33
    x *= 0xc4ceb9fe1a85ec53ULL
    x ^= x >> 33
    return x


cdef int _rehash(int64_t** htab, Py_ssize_t* hcap, Layer* L, Py_ssize_t first) noexcept nogil:
    cdef Py_ssize_t ncap = hcap[0] * 2, i, h
    cdef int64_t* t = <int64_t*>malloc(ncap * sizeof(int64_t))
    if t == NULL:
        return -1
    for i in range(ncap):
        t[i] = -1
    for i in range(first, L.size):
        h = <Py_ssize_t>(_mix(L.mask[i]) & <uint64_t>(ncap - 1))
        while t[h] >= 0:
            h = (h + 1) & (ncap - 1)
        t[h] = i
    free(htab[0])
    htab[0] = t
    hcap[0] = ncap
    return 0


def swap_change_dp(const int32_t[::1] a, const int32_t[::1] b, Py_ssize_t sigma,
                   int64_t bound, bint want_path, bint use_lb, int64_t max_states):
    """Exact adjacent-swap + substitution distance, bounded by ``bound``.

    Returns ``(cost, path)``. ``cost`` is ``bound + 1`` when the distance
    exceeds the bound; ``path[p]`` is the source index that lands at target
    position ``p`` (only when ``want_path`` and within bound). Raises
    ``OverflowError`` when more than ``max_states`` states would be kept.
    """
    cdef Py_ssize_t n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError("length mismatch")
    if bound < 0:
        return bound + 1, None
    if n == 0:
        return 0, (np.empty(0, dtype=np.int32) if want_path else None)
    if bound > 2000000000:
        bound = 2000000000

    cdef int32_t* lb = NULL
    if use_lb:
        lb = _suffix_lower_bounds(&a[0], &b[0], n, sigma)
        if lb == NULL:
            raise MemoryError()
        if lb[0] > bound:
            free(lb)
            return bound + 1, None

    cdef Layer L
    L.mask = NULL; L.cost = NULL; L.parent = NULL; L.src = NULL; L.size = 0; L.cap = 0
    cdef Py_ssize_t* start = <Py_ssize_t*>malloc((n + 2) * sizeof(Py_ssize_t))
    cdef Py_ssize_t hcap = 64
    cdef int64_t* htab = <int64_t*>malloc(hcap * sizeof(int64_t))
    cdef Py_ssize_t p, s, lo, hi, h, hn, kk, f, j, fnew
    cdef uint64_t mask, nmask, below
    cdef int32_t cost, c, inv
    cdef int k, t, err = 0
    cdef int64_t result = bound + 1
    cdef Py_ssize_t final_idx = -1

    if start == NULL or htab == NULL:
        free(start); free(htab); free(lb)
        raise MemoryError()

    with nogil:
        if _push(&L, 0, 0, -1, -1) != 0:
            err = 1
        start[0] = 0
        start[1] = 1
        p = 0
        while p < n and err == 0:
            lo = start[p]
            hi = start[p + 1]
            if lo == hi:
                break
            # fresh dedup table for layer p+1, sized for the worst expansion
            hn = hcap
            while hn < 4 * (hi - lo) + 64:
                hn *= 2
            if hn != hcap:
                free(htab)
                htab = <int64_t*>malloc(hn * sizeof(int64_t))
                hcap = hn
                if htab == NULL:
                    err = 1
                    break
            for h in range(hcap):
                htab[h] = -1
            for s in range(lo, hi):
                mask = L.mask[s]
                cost = L.cost[s]
                f = p - _popcount(mask)
                # candidate transitions: take token f, or jump to token f+1+k
                for k in range(-1, 64):
                    if k < 0:
                        j = f
                        inv = 0
                    else:
                        j = f + 1 + k
                        if j >= n:
                            break
                        if (mask >> k) & 1:
                            continue
                        below = mask & ((<uint64_t>1 << k) - 1) if k > 0 else 0
                        inv = 1 + k - _popcount(below)
                        if cost + inv > bound:
                            break
                    c = cost + inv + (1 if a[j] != b[p] else 0)
                    if c > bound:
                        continue
                    if k < 0:
                        if mask == 0xFFFFFFFFFFFFFFFFULL:
                            t = 64
                        else:
                            t = _ctz(~mask)
                        nmask = 0 if t + 1 >= 64 else (mask >> (t + 1))
                        fnew = f + 1 + t
                    else:
                        nmask = mask | (<uint64_t>1 << k)
                        fnew = f
                    if lb != NULL:
                        if c + lb[fnew * (n + 1) + p + 1] > bound:
                            continue
                    h = <Py_ssize_t>(_mix(nmask) & <uint64_t>(hcap - 1))
                    while True:
                        if htab[h] < 0:
                            if L.size - start[p + 1] >= max_states or L.size >= 0x7FFFFFFF:
                                err = 2
                                break
                            htab[h] = L.size
                            if _push(&L, nmask, c, <int32_t>s, <int32_t>j) != 0:
                                err = 1
                            break
                        kk = htab[h]
                        if L.mask[kk] == nmask:
                            if c < L.cost[kk]:
                                L.cost[kk] = c
                                L.parent[kk] = <int32_t>s
                                L.src[kk] = <int32_t>j
                            break
                        h = (h + 1) & (hcap - 1)
                    if err:
                        break
                    # keep the table sparse
                    if 2 * (L.size - start[p + 1]) > hcap:
                        if _rehash(&htab, &hcap, &L, start[p + 1]) != 0:
                            err = 1
                            break
                if err:
                    break
            start[p + 2] = L.size
            p += 1
        if err == 0 and p == n and start[n + 1] > start[n]:
            final_idx = start[n]
            result = L.cost[final_idx]

    free(htab)
    free(lb)
    path = None
    try:
        if err == 1:
            raise MemoryError()
        if err == 2:
            raise OverflowError("exact swap/change distance exceeded the state budget")
        if final_idx >= 0 and want_path:
            path = np.empty(n, dtype=np.int32)
            s = final_idx
            p = n - 1
            while p >= 0:
                path[p] = L.src[s]
                s = L.parent[s]
                p -= 1
    finally:
        free(start)
        free(L.mask)
        free(L.cost)
        free(L.parent)
        free(L.src)
    return result, path


def damerau_levenshtein_lw(const int32_t[::1] a, const int32_t[::1] b, Py_ssize_t sigma):
    """Unrestricted Damerau-Levenshtein (Lowrance-Wagner), unit costs."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t W = m + 2, i, j, k, l, db
    cdef int32_t inf = <int32_t>(n + m)
    cdef int32_t cost, best, v
    cdef int32_t* d = <int32_t*>malloc((n + 2) * W * sizeof(int32_t))
    cdef Py_ssize_t* da = <Py_ssize_t*>calloc(sigma + 1, sizeof(Py_ssize_t))
    if d == NULL or da == NULL:
        free(d); free(da)
        raise MemoryError()
    with nogil:
        d[0] = inf
        for i in range(n + 1):
            d[(i + 1) * W] = inf
            d[(i + 1) * W + 1] = <int32_t>i
        for j in range(m + 1):
            d[j + 1] = inf
            d[W + j + 1] = <int32_t>j
        for i in range(1, n + 1):
            db = 0
            for j in range(1, m + 1):
                k = da[b[j - 1]]
                l = db
                if a[i - 1] == b[j - 1]:
                    cost = 0
                    db = j
                else:
                    cost = 1
                best = d[i * W + j] + cost
                v = d[(i + 1) * W + j] + 1
                if v < best:
                    best = v
                v = d[i * W + j + 1] + 1
                if v < best:
                    best = v
                v = d[k * W + l] + <int32_t>((i - k - 1) + 1 + (j - l - 1))
                if v < best:
                    best = v
                d[(i + 1) * W + j + 1] = best
            da[a[i - 1]] = i
        best = d[(n + 1) * W + m + 1]
    free(d)
    free(da)
    return best


# ---------------------------------------------------------------------------
# Fingerprint index over stored bases
# ---------------------------------------------------------------------------

cdef uint32_t EMPTY = 0xFFFFFFFFu


cdef struct Table:
    uint32_t* keys
    uint32_t* vals
    uint64_t cap
    uint64_t count


cdef int _table_init(Table* t, uint64_t cap) noexcept nogil:
    cdef uint64_t i
    t.keys = <uint32_t*>malloc(cap * sizeof(uint32_t))
    t.vals = <uint32_t*>malloc(cap * sizeof(uint32_t))
    t.cap = cap
    t.count = 0
    if t.keys == NULL or t.vals == NULL:
        return -1
    for i in range(cap):
        t.vals[i] = EMPTY
    return 0


cdef void _table_free(Table* t) noexcept nogil:
    free(t.keys)
    free(t.vals)
    t.keys = NULL
    t.vals = NULL


cdef int _table_put(Table* t, uint32_t key, uint32_t val) noexcept nogil:
    cdef uint64_t h = _mix(key) & (t.cap - 1)
    while t.vals[h] != EMPTY:
        h = (h + 1) & (t.cap - 1)
    t.keys[h] = key
    t.vals[h] = val
    t.count += 1
    return 0


cdef int _table_insert(Table* t, uint32_t key, uint32_t val) noexcept nogil:
    cdef Table bigger
    cdef uint64_t i
    if 4 * (t.count + 1) > 3 * t.cap:
        if _table_init(&bigger, t.cap * 2) != 0:
            _table_free(&bigger)
            return -1
        for i in range(t.cap):
            if t.vals[i] != EMPTY:
                _table_put(&bigger, t.keys[i], t.vals[i])
        _table_free(t)
        t[0] = bigger
    return _table_put(t, key, val)


cdef inline uint64_t _fingerprint(const sym_t* data, Py_ssize_t lo, Py_ssize_t hi, uint64_t salt) noexcept nogil:
    cdef uint64_t h = 0xcbf29ce484222325ULL ^ _mix(salt + 1)
    cdef Py_ssize_t i
    for i in range(lo, hi):
        h ^= <uint64_t>data[i]
        h *= 0x100000001b3ULL
    return _mix(h ^ <uint64_t>(hi - lo))


def fingerprint(const sym_t[::1] arr, uint64_t salt=0):
    if arr.shape[0] == 0:
        return _mix(0xcbf29ce484222325ULL ^ _mix(salt + 1))
    return _fingerprint(&arr[0], 0, arr.shape[0], salt)


cdef class BaseIndex:
    """Exact-content and block fingerprints of unique bases.

    A base within ``t_max`` swap/change operations of a stored one touches at
    most ``2 * t_max`` positions, so with ``2 * t_max + 1`` blocks at least one
    block is untouched; its fingerprint finds the stored base.
    """

    cdef Table exact
    cdef Table* blocks
    cdef readonly Py_ssize_t n_symbols
    cdef readonly Py_ssize_t nblocks
    cdef readonly Py_ssize_t size

    def __cinit__(self, Py_ssize_t n_symbols, Py_ssize_t nblocks):
        cdef Py_ssize_t b
        if nblocks < 1 or nblocks > max(n_symbols, 1):
            raise ValueError("nblocks must be in [1, n_symbols]")
        self.n_symbols = n_symbols
        self.nblocks = nblocks
        self.size = 0
        self.blocks = <Table*>calloc(nblocks, sizeof(Table))
        if self.blocks == NULL or _table_init(&self.exact, 1024) != 0:
            raise MemoryError()
        for b in range(nblocks):
            if _table_init(&self.blocks[b], 1024) != 0:
                raise MemoryError()

    def __dealloc__(self):
        cdef Py_ssize_t b
        _table_free(&self.exact)
        if self.blocks != NULL:
            for b in range(self.nblocks):
                _table_free(&self.blocks[b])
            free(self.blocks)

    def __len__(self):
        return self.size

    def add(self, const sym_t[::1] arr, uint32_t ident):
        cdef Py_ssize_t b, n = self.n_symbols
        cdef int rc = 0
        if arr.shape[0] != n:
            raise ValueError("length mismatch")
        if ident == EMPTY:
            raise OverflowError("identifier space exhausted")
        with nogil:
            rc |= _table_insert(&self.exact, <uint32_t>_fingerprint(&arr[0], 0, n, 0), ident)
            for b in range(self.nblocks):
                rc |= _table_insert(&self.blocks[b],
                                    <uint32_t>_fingerprint(&arr[0], b * n // self.nblocks,
                                                           (b + 1) * n // self.nblocks, b + 1),
                                    ident)
        if rc:
            raise MemoryError()
        self.size += 1

    def exact_candidates(self, const sym_t[::1] arr):
        cdef Py_ssize_t n = self.n_symbols
        if arr.shape[0] != n:
            raise ValueError("length mismatch")
        cdef uint32_t key = <uint32_t>_fingerprint(&arr[0], 0, n, 0)
        out = []
        cdef uint64_t h = _mix(key) & (self.exact.cap - 1)
        while self.exact.vals[h] != EMPTY:
            if self.exact.keys[h] == key:
                out.append(self.exact.vals[h])
            h = (h + 1) & (self.exact.cap - 1)
        out.sort()
        return out

    def similar_candidates(self, const sym_t[::1] arr):
        cdef Py_ssize_t b, n = self.n_symbols
        cdef uint32_t key
        cdef uint64_t h
        cdef Table* t
        if arr.shape[0] != n:
            raise ValueError("length mismatch")
        found = set()
        for b in range(self.nblocks):
            t = &self.blocks[b]
            key = <uint32_t>_fingerprint(&arr[0], b * n // self.nblocks,
                                         (b + 1) * n // self.nblocks, b + 1)
            h = _mix(key) & (t.cap - 1)
            while t.vals[h] != EMPTY:
                if t.keys[h] == key:
                    found.add(t.vals[h])
                h = (h + 1) & (t.cap - 1)
        return sorted(found)
