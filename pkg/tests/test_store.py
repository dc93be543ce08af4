import os
import threading
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bifrost.core import ChunkingParams, FileManifest, SymbolString
from bifrost.crypto import EncryptedDeviation
from bifrost.distance import swap_change_alignment
from bifrost.errors import ConflictError, CorruptionError, LengthMismatchError, NotFoundError, ParameterError
from bifrost.store import (
    AdjSwap,
    ChangeValue,
    Deduped,
    GDStore,
    Unique,
    apply_delta,
    decode_record,
    delta_cost_bits,
    delta_from_alignment,
    encode_record,
    recount_stats,
)
from bifrost.transform import OutsourcePiece


def S(values, q=8):
    return SymbolString(np.array(values), q)


def clustered(rng, n_rows, n, clusters=20, max_edits=4):
    protos = rng.integers(0, 256, (clusters, n)).astype(np.uint8)
    rows = []
    for _ in range(n_rows):
        r = protos[rng.integers(clusters)].copy()
        for _ in range(rng.integers(0, max_edits + 1)):
            p = rng.integers(n - 1)
            if rng.random() < 0.5:
                r[p], r[p + 1] = r[p + 1], r[p]
            else:
                r[p] = rng.integers(256)
        rows.append(r)
    return rows


def test_exact_duplicate(store_dir):
    s = GDStore(store_dir)
    b = S([4, 1, 10, 8])
    rid, rec = s.ingest_base(b)
    assert rec == Unique(b)
    assert s.ingest_base(b)[1] == Deduped(rid, ())


def test_adjacent_swap_delta_when_cheap(store_dir):
    s = GDStore(store_dir, pointer_bits=8)
    rid, _ = s.ingest_base(S([4, 1, 10, 8]))
    _, rec = s.ingest_base(S([4, 10, 1, 8]))
    assert rec == Deduped(rid, (AdjSwap(1),))
    assert s.materialize(rec) == S([4, 10, 1, 8])


def test_cost_model_refuses_expensive_delta(store_dir):
    s = GDStore(store_dir)  # 32-bit pointer + 3-bit swap is not below 32 bits
    s.ingest_base(S([4, 1, 10, 8]))
    assert isinstance(s.ingest_base(S([4, 10, 1, 8]))[1], Unique)


def test_beyond_t_max_is_unique(store_dir):
    rng = np.random.default_rng(0)
    s = GDStore(store_dir, t_max=2)
    base = rng.integers(0, 256, 100).astype(np.uint8)
    s.ingest_base(S(base))
    far = base.copy()
    far[[3, 30, 60]] ^= 1
    assert isinstance(s.ingest_base(S(far))[1], Unique)
    near = base.copy()
    near[[3, 10]] ^= 1  # three changes away from ``far``, two from ``base``
    assert s.ingest_base(S(near))[1] == Deduped(0, (ChangeValue(3, int(near[3])), ChangeValue(10, int(near[10]))))


def test_materialize_examples(store_dir):
    s = GDStore(store_dir)
    b = S([4, 1, 10, 8])
    assert s.materialize(Unique(b)) == b
    rid, _ = s.ingest_base(b)
    assert s.materialize(Deduped(rid, (ChangeValue(0, 5),))) == S([5, 1, 10, 8])
    with pytest.raises(CorruptionError):
        s.materialize(Deduped(99, ()))


def test_delta_cost_bits_examples():
    assert delta_cost_bits((), 244, 8) == 0
    assert delta_cost_bits((ChangeValue(0, 1),), 244, 8) == 17
    assert delta_cost_bits((AdjSwap(3),), 244, 8) == 9
    assert delta_cost_bits((AdjSwap(0), ChangeValue(1, 1)), 256, 8) == 9 + 17


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 30), st.data())
def test_delta_from_alignment_reproduces_target(n, data):
    src = np.array(data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n)), np.uint8)
    dst = src.copy()
    for _ in range(data.draw(st.integers(0, 4))):
        p = data.draw(st.integers(0, n - 2))
        if data.draw(st.booleans()):
            dst[p], dst[p + 1] = dst[p + 1], dst[p]
        else:
            dst[p] = data.draw(st.integers(0, 5))
    d, path = swap_change_alignment(src, dst)
    delta = delta_from_alignment(src, dst, path)
    assert len(delta) == d
    assert np.array_equal(apply_delta(src, delta), dst)


def test_record_codec_roundtrip():
    for rec in (Unique(S([1, 2, 3], 5)), Deduped(7, (AdjSwap(1), ChangeValue(2, 31))), Deduped(0, ())):
        raw = encode_record(rec, 5)
        assert decode_record(raw[4:], 3, 5) == rec
        bad = bytearray(raw[4:])
        bad[1] ^= 0x10
        with pytest.raises(CorruptionError):
            decode_record(bytes(bad), 3, 5)


def test_clustered_roundtrip_size_and_recount(store_dir):
    rng = np.random.default_rng(1)
    rows = clustered(rng, 2000, 244)
    s = GDStore(store_dir)
    recs = [s.ingest_base(S(r)) for r in rows]
    for (rid, rec), r in zip(recs, rows):
        assert np.array_equal(s.materialize(rec).symbols, r)
        assert np.array_equal(s.materialize(s.get_record(rid)).symbols, r)
        if isinstance(rec, Deduped):
            assert 32 + delta_cost_bits(rec.delta, 244, 8) < 244 * 8
    stats = s.stats()
    assert stats.dedup_records > stats.unique_records
    assert stats == recount_stats(store_dir)
    s.close()
    with GDStore(store_dir) as again:
        assert again.stats() == stats
        assert np.array_equal(again.materialize(again.get_record(1999)).symbols, rows[-1])


def test_determinism_and_index_equivalence(tmp_path):
    rows = clustered(np.random.default_rng(2), 800, 120, clusters=10, max_edits=6)
    results = []
    for name, linear in (("a", False), ("b", False), ("c", True)):
        with GDStore(tmp_path / name, linear_scan=linear) as s:
            recs = [s.ingest_base(S(r))[1] for r in rows]
            results.append((recs, s.stats(), (tmp_path / name / "bases.log").read_bytes()))
    assert results[0] == results[1] == results[2]


def test_short_bases_fall_back_to_full_scan(store_dir):
    s = GDStore(store_dir, t_max=8, pointer_bits=4)
    s.ingest_base(S([1, 2, 3, 4, 5, 6]))
    _, rec = s.ingest_base(S([2, 1, 3, 4, 5, 6]))
    assert rec == Deduped(0, (AdjSwap(0),))


def test_geometry_is_fixed(store_dir):
    s = GDStore(store_dir)
    s.ingest_base(S([1, 2, 3]))
    with pytest.raises(LengthMismatchError):
        s.ingest_base(S([1, 2]))
    with pytest.raises(LengthMismatchError):
        s.ingest_base(S([1, 2, 3], 9))
    s.close()
    with pytest.raises(ParameterError):
        GDStore(store_dir, n_base=4)


def test_concurrent_equal_ingests_create_one_unique(store_dir):
    s = GDStore(store_dir)
    base = S(list(range(50)))
    out = []
    barrier = threading.Barrier(8)

    def worker():
        barrier.wait()
        out.append(s.ingest_base(base)[1])

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sum(isinstance(r, Unique) for r in out) == 1


def _object(tag: bytes, rows, n_del=2, q=8):
    n_org = len(rows[0]) + n_del
    params = ChunkingParams(n_org * q, q)
    m = FileManifest(tag, len(rows), len(rows) * n_org * q // 8, params, n_del)
    pieces = [OutsourcePiece(S(r, q)) for r in rows]
    enc = [EncryptedDeviation(bytes(12), bytes([i]) * 5, bytes(16)) for i in range(len(rows))]
    return m, pieces, enc


def test_put_get_object(store_dir):
    tag = b"T" * 32
    rows = clustered(np.random.default_rng(3), 6, 30, clusters=2)
    m, pieces, enc = _object(tag, rows)
    s = GDStore(store_dir)
    assert s.put_object(tag, m, pieces, enc) is True
    assert s.put_object(tag, m, pieces, enc) is False
    got_m, got_p, got_e = s.get_object(tag)
    assert got_m == m and got_e == enc
    assert [p.base for p in got_p] == [p.base for p in pieces]
    with pytest.raises(ConflictError):
        s.put_object(tag, m, pieces[::-1], enc)
    with pytest.raises(NotFoundError):
        s.get_object(b"U" * 32)
    with pytest.raises(LengthMismatchError):
        s.put_object(b"V" * 32, *_object(b"V" * 32, rows)[:1], pieces[:-1], enc)
    with pytest.raises(ParameterError):
        s.put_object(b"W" * 32, m, pieces, enc)
    stats = s.stats()
    assert (stats.n_f, stats.tag_bits) == (1, 256)
    assert stats.enc_local_bits == 6 * 8 * (12 + 5 + 16)
    assert stats == recount_stats(store_dir)
    s.close()
    with GDStore(store_dir) as again:
        assert again.get_object(tag)[0] == m
        assert again.tags() == [tag]


def test_empty_object(store_dir):
    tag = b"E" * 64
    m = FileManifest(tag, 0, 0, ChunkingParams(), 12)
    with GDStore(store_dir) as s:
        s.put_object(tag, m, [], [])
        assert s.get_object(tag) == (m, [], [])
    assert recount_stats(store_dir).n_f == 1


def test_torn_tail_is_truncated(store_dir):
    tag = b"T" * 32
    m, pieces, enc = _object(tag, clustered(np.random.default_rng(4), 3, 20))
    with GDStore(store_dir) as s:
        s.put_object(tag, m, pieces, enc)
    bases = Path(store_dir, "bases.log")
    size = bases.stat().st_size
    with open(bases, "ab") as fh:
        fh.write(b"\x50\x00\x00\x00\x00partial")
    with open(Path(store_dir, "index.bin"), "ab") as fh:
        fh.write(b"\x20" + b"Z" * 10)
    with GDStore(store_dir) as s:
        assert bases.stat().st_size == size
        assert [p.base for p in s.get_object(tag)[1]] == [p.base for p in pieces]
        s.ingest_base(pieces[0].base)


def test_checksum_failure_surfaces_on_read(store_dir):
    tag = b"T" * 32
    m, pieces, enc = _object(tag, [list(range(20)), list(range(1, 21))])
    with GDStore(store_dir) as s:
        s.put_object(tag, m, pieces, enc)
    path = Path(store_dir, "bases.log")
    raw = bytearray(path.read_bytes())
    raw[8 + 4 + 3] ^= 1  # a symbol of the first record
    path.write_bytes(bytes(raw))
    with GDStore(store_dir) as s:
        with pytest.raises(CorruptionError):
            s.get_object(tag)


def test_bad_magic_rejected(store_dir):
    GDStore(store_dir).close()
    Path(store_dir, "objects.log").write_bytes(b"NOTMAGIC")
    with pytest.raises(CorruptionError):
        GDStore(store_dir)


def test_exact_mode_never_uses_deltas(store_dir):
    rows = clustered(np.random.default_rng(5), 300, 64, clusters=5)
    with GDStore(store_dir, mode="exact") as s:
        recs = [s.ingest_base(S(r))[1] for r in rows]
    assert all(isinstance(r, Unique) or r.delta == () for r in recs)
    assert os.path.getsize(Path(store_dir, "bases.log")) > 0


def test_large_object_reads_back_unflushed_bases(store_dir):
    # more unique bases than the read cache holds, then near copies of the first ones
    rng = np.random.default_rng(6)
    rows = rng.integers(0, 256, (5000, 40)).astype(np.uint8)
    near = rows[:50].copy()
    near[:, 7] ^= 1
    matrix = np.concatenate([rows, near])
    tag = b"L" * 32
    m = FileManifest(tag, len(matrix), len(matrix) * 42, ChunkingParams(42 * 8, 8), 2)
    enc = [EncryptedDeviation(bytes(12), b"", bytes(16))] * len(matrix)
    with GDStore(store_dir, pointer_bits=8) as s:
        s.put_payload(tag, m, matrix, enc)
        assert np.array_equal(s.get_payload(tag)[1], matrix)
        assert s.stats().dedup_records == 50


def test_length_prefix_past_end_of_file_is_corruption(store_dir):
    tag = b"T" * 32
    m, pieces, enc = _object(tag, [list(range(20))])
    with GDStore(store_dir) as s:
        s.put_object(tag, m, pieces, enc)
    path = Path(store_dir, "objects.log")
    raw = bytearray(path.read_bytes())
    raw[8 + 2] ^= 0x01  # the only entry now claims 64 KiB more than the file holds
    path.write_bytes(bytes(raw))
    with GDStore(store_dir, verify_checksums=False) as s:
        with pytest.raises(CorruptionError):
            s.get_object(tag)
