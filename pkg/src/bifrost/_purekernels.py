"""Pure-Python implementations of the compiled kernels.

Same signatures and results as ``_kernels``; used when the extension is not
built or when ``BIFROST_PURE=1`` is set.
"""

from __future__ import annotations

import struct

import numpy as np

_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF
_EMPTY = 0xFFFFFFFF


# --- ChaCha20 ---------------------------------------------------------------

def _chacha_block(key_words: tuple[int, ...], counter: int) -> bytes:
    s = [0x61707865, 0x3320646E, 0x79622D32, 0x6B206574, *key_words, counter & _MASK32, 0, 0, 0]
    x = list(s)

    def qr(a, b, c, d):
        x[a] = (x[a] + x[b]) & _MASK32
        x[d] ^= x[a]
        x[d] = ((x[d] << 16) | (x[d] >> 16)) & _MASK32
        x[c] = (x[c] + x[d]) & _MASK32
        x[b] ^= x[c]
        x[b] = ((x[b] << 12) | (x[b] >> 20)) & _MASK32
        x[a] = (x[a] + x[b]) & _MASK32
        x[d] ^= x[a]
        x[d] = ((x[d] << 8) | (x[d] >> 24)) & _MASK32
        x[c] = (x[c] + x[d]) & _MASK32
        x[b] ^= x[c]
        x[b] = ((x[b] << 7) | (x[b] >> 25)) & _MASK32

    for _ in range(10):
        qr(0, 4, 8, 12)
        qr(1, 5, 9, 13)
        qr(2, 6, 10, 14)
        qr(3, 7, 11, 15)
        qr(0, 5, 10, 15)
        qr(1, 6, 11, 12)
        qr(2, 7, 8, 13)
        qr(3, 4, 9, 14)
    return struct.pack("<16I", *((x[i] + s[i]) & _MASK32 for i in range(16)))


def chacha20_keystream(key, nbytes: int, counter: int = 0) -> bytes:
    key = bytes(key)
    if len(key) != 32:
        raise ValueError("ChaCha20 key must be 32 bytes")
    if nbytes < 0:
        raise ValueError("nbytes must be non-negative")
    words = struct.unpack("<8I", key)
    out = bytearray()
    while len(out) < nbytes:
        out += _chacha_block(words, counter)
        counter += 1
    return bytes(out[:nbytes])


class _Stream:
    def __init__(self, key: bytes):
        self._words = struct.unpack("<8I", key)
        self._counter = 0
        self._buf = b""
        self._pos = 0

    def byte(self) -> int:
        if self._pos == len(self._buf):
            self._buf = _chacha_block(self._words, self._counter)
            self._counter += 1
            self._pos = 0
        self._pos += 1
        return self._buf[self._pos - 1]

    def uniform(self, r: int) -> int:
        span, nb = 256, 1
        while span < r:
            span <<= 8
            nb += 1
        limit = span - span % r
        while True:
            v = 0
            for _ in range(nb):
                v = (v << 8) | self.byte()
            if v < limit:
                return v % r


def derive_positions_batch(keys, n_org: int, n_del: int) -> np.ndarray:
    if n_del < 0 or n_del >= n_org:
        raise ValueError("need 0 <= n_del < n_org")
    keys = np.asarray(keys, dtype=np.uint8)
    if len(keys) and keys.shape[1] != 32:
        raise ValueError("stream keys must be 32 bytes")
    out = np.empty((len(keys), n_del), dtype=np.int32)
    for r, key in enumerate(keys):
        st = _Stream(key.tobytes())
        seen: set[int] = set()
        k = 0
        while k < n_del:
            v = st.uniform(n_org)
            if v in seen:
                continue
            seen.add(v)
            out[r, k] = v
            k += 1
    return out


# --- deletion transform -----------------------------------------------------

def _check_positions(row, n_org: int) -> None:
    if len(set(row.tolist())) != len(row) or (len(row) and (row.min() < 0 or row.max() >= n_org)):
        raise ValueError("positions must be distinct and inside the chunk")


def delete_batch(chunks, positions):
    chunks = np.asarray(chunks)
    positions = np.asarray(positions, dtype=np.int32)
    if positions.shape[0] != chunks.shape[0]:
        raise ValueError("one position row per chunk required")
    rows, n_org = chunks.shape
    n_del = positions.shape[1]
    bases = np.empty((rows, n_org - n_del), dtype=chunks.dtype)
    values = np.empty((rows, n_del), dtype=chunks.dtype)
    for r in range(rows):
        _check_positions(positions[r], n_org)
        keep = np.ones(n_org, dtype=bool)
        keep[positions[r]] = False
        values[r] = chunks[r, positions[r]]
        bases[r] = chunks[r, keep]
    return bases, values


def reinsert_batch(bases, positions, values):
    bases = np.asarray(bases)
    positions = np.asarray(positions, dtype=np.int32)
    values = np.asarray(values)
    if positions.shape[0] != bases.shape[0] or values.shape[0] != bases.shape[0]:
        raise ValueError("row counts differ")
    if positions.shape[1] != values.shape[1]:
        raise ValueError("positions and values differ in length")
    rows, n_base = bases.shape
    n_org = n_base + values.shape[1]
    out = np.empty((rows, n_org), dtype=bases.dtype)
    for r in range(rows):
        _check_positions(positions[r], n_org)
        keep = np.ones(n_org, dtype=bool)
        keep[positions[r]] = False
        out[r, positions[r]] = values[r]
        out[r, keep] = bases[r]
    return out


# --- distances --------------------------------------------------------------

def hamming(a, b) -> int:
    if len(a) != len(b):
        raise ValueError("length mismatch")
    return int(np.count_nonzero(np.asarray(a) != np.asarray(b)))


def swap_change_upper(a, b, want_path: bool):
    a = [int(v) for v in a]
    b = [int(v) for v in b]
    n = len(a)
    if len(b) != n:
        raise ValueError("length mismatch")
    d = [0] * (n + 1)
    sw = [False] * (n + 1)
    for i in range(1, n + 1):
        d[i] = d[i - 1] + (a[i - 1] != b[i - 1])
        if i >= 2 and a[i - 2] != a[i - 1] and a[i - 2] == b[i - 1] and a[i - 1] == b[i - 2]:
            if d[i - 2] + 1 < d[i]:
                d[i] = d[i - 2] + 1
                sw[i] = True
    path = None
    if want_path:
        path = np.arange(n, dtype=np.int32)
        i = n
        while i > 0:
            if sw[i]:
                path[i - 1], path[i - 2] = i - 2, i - 1
                i -= 2
            else:
                i -= 1
    return d[n], path


def _suffix_lower_bounds(a, b, sigma):
    n = len(a)
    lb = [[0] * (n + 1) for _ in range(n + 1)]
    ca = [0] * (sigma + 1)
    for f in range(n, -1, -1):
        if f < n:
            ca[a[f]] += 1
        cb = [0] * (sigma + 1)
        cur = 0
        row = lb[f]
        for p in range(n - 1, -1, -1):
            s = b[p]
            cb[s] += 1
            if cb[s] > ca[s]:
                cur += 1
            row[p] = cur
    return lb


def swap_change_dp(a, b, sigma: int, bound: int, want_path: bool, use_lb: bool, max_states: int):
    a = [int(v) for v in a]
    b = [int(v) for v in b]
    n = len(a)
    if len(b) != n:
        raise ValueError("length mismatch")
    if bound < 0:
        return bound + 1, None
    if n == 0:
        return 0, (np.empty(0, dtype=np.int32) if want_path else None)
    lb = None
    if use_lb:
        lb = _suffix_lower_bounds(a, b, sigma)
        if lb[0][0] > bound:
            return bound + 1, None

    # layer entries: mask -> (cost, parent mask, source token)
    layers: list[dict[int, tuple[int, int, int]]] = [{0: (0, -1, -1)}]
    for p in range(n):
        nxt: dict[int, tuple[int, int, int]] = {}
        for mask, (cost, _, _) in layers[-1].items():
            f = p - bin(mask).count("1")
            for k in range(-1, 64):
                if k < 0:
                    j, inv = f, 0
                else:
                    j = f + 1 + k
                    if j >= n:
                        break
                    if (mask >> k) & 1:
                        continue
                    inv = 1 + k - bin(mask & ((1 << k) - 1)).count("1")
                    if cost + inv > bound:
                        break
                c = cost + inv + (a[j] != b[p])
                if c > bound:
                    continue
                if k < 0:
                    t = 0
                    while (mask >> t) & 1:
                        t += 1
                    nmask = mask >> (t + 1)
                    fnew = f + 1 + t
                else:
                    nmask = mask | (1 << k)
                    fnew = f
                if lb is not None and c + lb[fnew][p + 1] > bound:
                    continue
                prev = nxt.get(nmask)
                if prev is None:
                    if len(nxt) >= max_states:
                        raise OverflowError("exact swap/change distance exceeded the state budget")
                    nxt[nmask] = (c, mask, j)
                elif c < prev[0]:
                    nxt[nmask] = (c, mask, j)
        layers.append(nxt)
        if not nxt:
            return bound + 1, None
    final = layers[n].get(0)
    if final is None:
        return bound + 1, None
    path = None
    if want_path:
        path = np.empty(n, dtype=np.int32)
        mask = 0
        for p in range(n, 0, -1):
            _, parent, j = layers[p][mask]
            path[p - 1] = j
            mask = parent
    return final[0], path


def damerau_levenshtein_lw(a, b, sigma: int) -> int:
    a = [int(v) for v in a]
    b = [int(v) for v in b]
    n, m = len(a), len(b)
    inf = n + m
    da = [0] * (sigma + 1)
    d = [[0] * (m + 2) for _ in range(n + 2)]
    d[0][0] = inf
    for i in range(n + 1):
        d[i + 1][0] = inf
        d[i + 1][1] = i
    for j in range(m + 1):
        d[0][j + 1] = inf
        d[1][j + 1] = j
    for i in range(1, n + 1):
        db = 0
        for j in range(1, m + 1):
            k, l = da[b[j - 1]], db
            if a[i - 1] == b[j - 1]:
                cost = 0
                db = j
            else:
                cost = 1
            d[i + 1][j + 1] = min(
                d[i][j] + cost,
                d[i + 1][j] + 1,
                d[i][j + 1] + 1,
                d[k][l] + (i - k - 1) + 1 + (j - l - 1),
            )
        da[a[i - 1]] = i
    return d[n + 1][m + 1]


# --- fingerprints -----------------------------------------------------------

def _mix(x: int) -> int:
    x &= _MASK64
    x ^= x >> 33
    x = (x * 0xFF51AFD7ED558CCD) & _MASK64
    x ^= x >> 33
    x = (x * 0xC4CEB9FE1A85EC53) & _MASK64
    x ^= x >> 33
    return x


def _fingerprint(values, lo: int, hi: int, salt: int) -> int:
    h = 0xCBF29CE484222325 ^ _mix(salt + 1)
    for i in range(lo, hi):
        h ^= int(values[i])
        h = (h * 0x100000001B3) & _MASK64
    return _mix(h ^ (hi - lo))


def fingerprint(arr, salt: int = 0) -> int:
    values = np.asarray(arr).tolist()
    return _fingerprint(values, 0, len(values), salt)


class BaseIndex:
    """Dict-backed twin of the compiled fingerprint index."""

    def __init__(self, n_symbols: int, nblocks: int):
        if nblocks < 1 or nblocks > max(n_symbols, 1):
            raise ValueError("nblocks must be in [1, n_symbols]")
        self.n_symbols = n_symbols
        self.nblocks = nblocks
        self.size = 0
        self._exact: dict[int, list[int]] = {}
        self._blocks: list[dict[int, list[int]]] = [{} for _ in range(nblocks)]

    def __len__(self) -> int:
        return self.size

    def _keys(self, arr):
        values = np.asarray(arr).tolist()
        n = self.n_symbols
        if len(values) != n:
            raise ValueError("length mismatch")
        exact = _fingerprint(values, 0, n, 0) & _MASK32
        blocks = [
            _fingerprint(values, b * n // self.nblocks, (b + 1) * n // self.nblocks, b + 1) & _MASK32
            for b in range(self.nblocks)
        ]
        return exact, blocks

    def add(self, arr, ident: int) -> None:
        if ident == _EMPTY:
            raise OverflowError("identifier space exhausted")
        exact, blocks = self._keys(arr)
        self._exact.setdefault(exact, []).append(int(ident))
        for table, key in zip(self._blocks, blocks):
            table.setdefault(key, []).append(int(ident))
        self.size += 1

    def exact_candidates(self, arr) -> list[int]:
        exact, _ = self._keys(arr)
        return sorted(self._exact.get(exact, []))

    def similar_candidates(self, arr) -> list[int]:
        _, blocks = self._keys(arr)
        found: set[int] = set()
        for table, key in zip(self._blocks, blocks):
            found.update(table.get(key, ()))
        return sorted(found)
