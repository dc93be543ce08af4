import itertools
import json
from pathlib import Path

import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers import Cipher
from cryptography.hazmat.primitives.ciphers.algorithms import ChaCha20
from hypothesis import given, settings
from hypothesis import strategies as st

from bifrost import kernels
from bifrost.crypto import stream_key

VECTORS = json.loads((Path(__file__).parent / "fixtures" / "prng_vectors.json").read_text())


def _ref_keystream(key: bytes, n: int, counter: int = 0) -> bytes:
    nonce = counter.to_bytes(4, "little") + bytes(12)
    return Cipher(ChaCha20(key, nonce), mode=None).encryptor().update(bytes(n))


def _keys(seeds):
    return np.frombuffer(b"".join(stream_key(s) for s in seeds), dtype=np.uint8).reshape(len(seeds), 32)


def test_keystream_matches_frozen_vectors(backend):
    for case in VECTORS["keystream"]:
        key = stream_key(bytes.fromhex(case["seed"]))
        assert bytes(backend.chacha20_keystream(key, 200)).hex() == case["bytes"]


@pytest.mark.parametrize("counter,n", [(0, 1), (0, 64), (1, 65), (7, 300), (2**32 - 2, 128)])
def test_keystream_matches_reference_cipher(backend, counter, n):
    key = bytes(range(32))
    assert bytes(backend.chacha20_keystream(key, n, counter)) == _ref_keystream(key, n, counter)


def test_positions_match_frozen_vectors(backend):
    for case in VECTORS["positions"]:
        keys = _keys([bytes.fromhex(case["seed"])])
        got = backend.derive_positions_batch(keys, case["n_org"], case["n_del"])
        assert np.asarray(got)[0].tolist() == case["positions"]


def test_positions_distinct_and_in_range(backend):
    keys = _keys([i.to_bytes(4, "big") for i in range(200)])
    pos = np.asarray(backend.derive_positions_batch(keys, 40, 25))
    assert pos.shape == (200, 25)
    assert pos.min() >= 0 and pos.max() < 40
    assert all(len(set(row)) == 25 for row in pos.tolist())


@pytest.mark.parametrize("dtype", [np.uint8, np.uint16, np.uint32])
def test_delete_reinsert_batch_roundtrip(backend, dtype):
    rng = np.random.default_rng(3)
    chunks = rng.integers(0, 200, (30, 50)).astype(dtype)
    keys = _keys([bytes([i]) for i in range(30)])
    pos = np.asarray(backend.derive_positions_batch(keys, 50, 7), dtype=np.int32)
    bases, values = backend.delete_batch(chunks, pos)
    for r in range(30):
        keep = np.ones(50, bool)
        keep[pos[r]] = False
        assert np.array_equal(bases[r], chunks[r][keep])
        assert np.array_equal(values[r], chunks[r][pos[r]])
    assert np.array_equal(backend.reinsert_batch(bases, pos, values), chunks)


def test_delete_batch_rejects_bad_positions(backend):
    chunks = np.zeros((1, 5), np.uint8)
    for bad in ([[1, 1]], [[0, 5]], [[-1, 2]]):
        with pytest.raises(ValueError):
            backend.delete_batch(chunks, np.array(bad, np.int32))
    with pytest.raises(ValueError):
        backend.reinsert_batch(np.zeros((1, 3), np.uint8), np.array([[2, 2]], np.int32), np.zeros((1, 2), np.uint8))


def _brute_swap_change(a, b):
    n = len(a)
    best = None
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        cost = inv + sum(1 for p in range(n) if a[perm[p]] != b[p])
        best = cost if best is None else min(best, cost)
    return best


def _apply_path(a, b, path):
    n = len(a)
    inv = sum(1 for i in range(n) for j in range(i + 1, n) if path[i] > path[j])
    return inv + sum(1 for p in range(n) if a[path[p]] != b[p])


def test_swap_change_dp_matches_permutation_brute_force(backend):
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(0, 7))
        a = rng.integers(0, 3, n).astype(np.int32)
        b = rng.integers(0, 3, n).astype(np.int32)
        want = _brute_swap_change(a.tolist(), b.tolist())
        for use_lb in (False, True):
            d, path = backend.swap_change_dp(a, b, 3, 20, True, use_lb, 10**6)
            assert d == want
            assert sorted(path) == list(range(n)) and _apply_path(a, b, path) == want
        d, path = backend.swap_change_dp(a, b, 3, want - 1, True, False, 10**6) if want else (None, None)
        if want:
            assert d == want and path is None


def test_upper_bound_never_below_exact(backend):
    rng = np.random.default_rng(5)
    for _ in range(300):
        n = int(rng.integers(0, 7))
        a = rng.integers(0, 3, n).astype(np.int32)
        b = rng.integers(0, 3, n).astype(np.int32)
        u, path = backend.swap_change_upper(a, b, True)
        assert u >= _brute_swap_change(a.tolist(), b.tolist())
        assert _apply_path(a, b, path) <= u


def test_swap_change_dp_budget(backend):
    rng = np.random.default_rng(0)
    a = rng.integers(0, 64, 60).astype(np.int32)
    b = rng.integers(0, 64, 60).astype(np.int32)
    with pytest.raises(OverflowError):
        backend.swap_change_dp(a, b, 64, 200, False, False, 1000)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=7), st.lists(st.integers(0, 3), max_size=7))
def test_backends_agree(a, b):
    impls = list(kernels.backends().values())
    ai, bi = np.array(a, np.int32), np.array(b, np.int32)
    dl = {m.damerau_levenshtein_lw(ai, bi, 4) for m in impls}
    assert len(dl) == 1
    ua, ub = np.array(a, np.uint8), np.array(b, np.uint8)
    assert len({m.fingerprint(ua, 3) for m in impls}) == 1
    if len(a) == len(b):
        assert len({m.swap_change_dp(ai, bi, 4, 10, False, False, 10**6)[0] for m in impls}) == 1
        assert len({m.swap_change_upper(ai, bi, False)[0] for m in impls}) == 1
        assert len({m.hamming(ua, ub) for m in impls}) == 1


def test_base_index_candidates(backend):
    rng = np.random.default_rng(2)
    n, t_max = 100, 3
    idx = backend.BaseIndex(n, 2 * t_max + 1)
    bases = rng.integers(0, 256, (50, n)).astype(np.uint8)
    for i, b in enumerate(bases):
        idx.add(b, i)
    assert len(idx) == 50 and idx.nblocks == 7
    assert idx.exact_candidates(bases[17]) == [17]
    near = bases[17].copy()
    for p in rng.choice(n - 1, t_max, replace=False):
        near[p], near[p + 1] = near[p + 1], near[p] ^ 1
    assert 17 in idx.similar_candidates(near)


def test_base_index_grows_past_initial_capacity(backend):
    idx = backend.BaseIndex(8, 1)
    rows = np.arange(5000 * 8, dtype=np.uint32).reshape(5000, 8)
    for i, r in enumerate(rows):
        idx.add(r, i)
    assert all(idx.exact_candidates(rows[i]) == [i] for i in range(0, 5000, 97))


@pytest.mark.skipif("cython" not in kernels.backends(), reason="extension not built")
def test_benchmark_script_agrees_and_runs(tmp_path):
    import runpy

    bench = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"))
    assert bench["main"](["--repeat", "1", "--json", str(tmp_path / "b.json")]) == 0
    assert len(json.loads((tmp_path / "b.json").read_text())) == 9
