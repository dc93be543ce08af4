import dataclasses
import os
import tempfile
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from bifrost.core import ChunkingParams
from bifrost.crypto import EncryptedDeviation, KeyMaterial, decrypt
from bifrost.errors import (
    BifrostError,
    DecryptionFailure,
    IntegrityFailure,
    LengthMismatchError,
    NotFoundError,
    ParameterError,
)
from bifrost.protocol import start_server
from bifrost.sharing import ShareToken, receiver_fetch, sender_store
from bifrost.store import GDStore

PARAMS = ChunkingParams(2048, 8)


@pytest.fixture
def store(store_dir):
    with GDStore(store_dir) as s:
        yield s


def test_upload_shape_for_512_bytes(store):
    keys = KeyMaterial.generate()
    token = sender_store(os.urandom(512), PARAMS, 12, keys, store)
    manifest, pieces, enc = store.get_object(token.tag)
    assert [len(p) for p in pieces] == [244, 244]
    assert [len(decrypt(keys.enc_key, e)) * 8 for e in enc] == [128, 128]
    assert manifest.n_del == 12 and manifest.chunk_count == 2


def test_zero_deletions(store):
    data = os.urandom(700)
    token = sender_store(data, PARAMS, 0, KeyMaterial.generate(), store)
    _, pieces, _ = store.get_object(token.tag)
    assert b"".join(p.base.to_bytes() for p in pieces)[:700] == data
    assert receiver_fetch(token, store) == data


@pytest.mark.parametrize("mac_bits,enc_bits,tau", [(256, 128, 640), (256, 256, 768), (512, 128, 1152), (512, 256, 1280)])
def test_token_size(store, mac_bits, enc_bits, tau):
    keys = KeyMaterial.generate(mac_bits, enc_bits)
    for size in (0, 1000, 100_000):
        token = sender_store(os.urandom(size), PARAMS, 12, keys, store)
        assert token.bit_size == tau


def test_token_file_roundtrip(tmp_path):
    keys = KeyMaterial.generate(512, 256)
    token = ShareToken(b"\x07" * 64, keys.mac_key, keys.enc_key)
    path = tmp_path / "t.tok"
    token.save(path)
    raw = path.read_bytes()
    assert raw[0] == 2 and raw[1:65] == b"\x07" * 64 and raw[65:67] == (64).to_bytes(2, "little")
    assert ShareToken.load(path) == token
    for bad in (raw[:-1], raw + b"\0", b"\x03" + raw[1:], b""):
        with pytest.raises(ParameterError):
            ShareToken.from_bytes(bad)


def test_wrong_keys(store):
    data = os.urandom(3000)
    keys = KeyMaterial.generate()
    token = sender_store(data, PARAMS, 12, keys, store)
    with pytest.raises(DecryptionFailure):
        receiver_fetch(ShareToken(token.tag, keys.mac_key, bytes(16)), store)
    with pytest.raises(IntegrityFailure):
        receiver_fetch(ShareToken(token.tag, bytes(32), keys.enc_key), store)
    with pytest.raises(NotFoundError):
        receiver_fetch(ShareToken(b"\0" * 32, keys.mac_key, keys.enc_key), store)


def test_flipped_stored_symbol_is_detected(store_dir):
    data = os.urandom(600)
    with GDStore(store_dir, verify_checksums=False) as s:
        token = sender_store(data, PARAMS, 12, KeyMaterial.generate(), s)
    path = Path(store_dir, "bases.log")
    raw = bytearray(path.read_bytes())
    raw[8 + 4 + 1 + 100] ^= 0x04  # a symbol of the first unique base
    path.write_bytes(bytes(raw))
    with GDStore(store_dir, verify_checksums=False) as s:
        with pytest.raises(IntegrityFailure):
            receiver_fetch(token, s)


@pytest.mark.parametrize("n_del", [0, 1, 12, 255])
@pytest.mark.parametrize("pad", [0, 128])
def test_roundtrip_over_socket(store, n_del, pad):
    srv = start_server(store)
    try:
        for size in (0, 1, 255, 256, 257, 4096, 65_537):
            data = os.urandom(size)
            token = sender_store(data, PARAMS, n_del, KeyMaterial.generate(), srv.address, pad_block_bits=pad)
            assert receiver_fetch(token, srv.address) == data
    finally:
        srv.shutdown()
        srv.server_close()


def test_store_keeps_one_geometry(store):
    sender_store(b"abc", PARAMS, 12, KeyMaterial.generate(), store)
    with pytest.raises(LengthMismatchError):
        sender_store(b"abc", PARAMS, 11, KeyMaterial.generate(), store)


@pytest.mark.parametrize("geometry", [(512, 8), (800, 8), (40, 5), (96, 12), (64, 32)])
def test_other_geometries(store_dir, geometry):
    params = ChunkingParams(*geometry)
    with GDStore(store_dir) as s:
        for size in (0, 3, 77, 1000):
            data = os.urandom(size)
            token = sender_store(data, params, 1, KeyMaterial.generate(), s)
            assert receiver_fetch(token, s) == data


def test_n_del_must_be_below_n_org(store):
    with pytest.raises(ParameterError):
        sender_store(b"x", PARAMS, 256, KeyMaterial.generate(), store)


def test_fixed_master_lets_the_cloud_deduplicate(store):
    data = os.urandom(2560)
    tweaked = bytearray(data)
    tweaked[1000] ^= 0xFF
    master = b"m" * 32
    for d in (data, bytes(tweaked)):
        sender_store(d, PARAMS, 12, KeyMaterial.generate(), store, master_seed=master)
    stats = store.stats()
    assert stats.unique_records == 10 and stats.dedup_records == 10


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 1 << 20), st.randoms(use_true_random=False))
def test_end_to_end_identity(store, size, rnd):
    data = rnd.randbytes(size)
    token = sender_store(data, PARAMS, 12, KeyMaterial.generate(), store)
    assert receiver_fetch(token, store) == data


class TamperingCloud:
    """Wraps a store and hands back a modified copy of whatever it serves."""

    def __init__(self, store, mutate):
        self.store, self.mutate = store, mutate

    def put_payload(self, *args):
        return self.store.put_payload(*args)

    def get_payload(self, tag):
        manifest, bases, enc = self.store.get_payload(tag)
        return self.mutate(manifest, bases.copy(), list(enc))


def _flip_base(m, b, e):
    b[1, 7] ^= 1
    return m, b, e


def _flip_ciphertext(m, b, e):
    e[0] = EncryptedDeviation(e[0].nonce, bytes([e[0].ciphertext[0] ^ 1]) + e[0].ciphertext[1:], e[0].auth_tag)
    return m, b, e


def _swap_deviations(m, b, e):
    return m, b, e[::-1]


def _swap_bases(m, b, e):
    return m, b[::-1].copy(), e


def _drop_chunk(m, b, e):
    return m, b[:-1], e[:-1]


def _other_tag(m, b, e):
    return dataclasses.replace(m, file_tag=bytes(32)), b, e


@pytest.mark.parametrize(
    "mutate,error",
    [
        (_flip_base, IntegrityFailure),
        (_flip_ciphertext, DecryptionFailure),
        (_swap_deviations, IntegrityFailure),
        (_swap_bases, IntegrityFailure),
        (_drop_chunk, IntegrityFailure),
        (_other_tag, IntegrityFailure),
    ],
)
def test_tampering_cloud_is_caught(store, mutate, error):
    data = os.urandom(1000)
    token = sender_store(data, PARAMS, 12, KeyMaterial.generate(), store)
    assert receiver_fetch(token, TamperingCloud(store, lambda *x: x)) == data
    with pytest.raises(error):
        receiver_fetch(token, TamperingCloud(store, mutate))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 7))
def test_unchecked_store_never_returns_wrong_bytes(target, bit):
    with tempfile.TemporaryDirectory() as d:
        master = b"fixed"
        with GDStore(d, verify_checksums=False) as s:
            base = bytes(range(256)) * 2
            sender_store(base, PARAMS, 12, KeyMaterial.generate(), s, master_seed=master)
            near = bytearray(base)
            near[300] ^= 0x55
            token = sender_store(bytes(near), PARAMS, 12, KeyMaterial.generate(), s, master_seed=master)
        files = sorted(p for p in Path(d).iterdir() if p.suffix != ".json")
        sizes = [p.stat().st_size for p in files]
        offset = target % sum(sizes)
        for path, size in zip(files, sizes):
            if offset < size:
                raw = bytearray(path.read_bytes())
                raw[offset] ^= 1 << bit
                path.write_bytes(bytes(raw))
                break
            offset -= size
        try:
            with GDStore(d, verify_checksums=False) as s:
                got = receiver_fetch(token, s)
        except BifrostError:
            return
        assert got == bytes(near)
