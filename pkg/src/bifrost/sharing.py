"""Sender and receiver pipelines plus the share token handed between them."""

from __future__ import annotations

import contextlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ChunkingParams, FileManifest, assemble_matrix, chunk_matrix, pack_symbols, unpack_symbols
from .crypto import (
    FileTag,
    KeyMaterial,
    decrypt_all,
    derive_chunk_seeds,
    encrypt_all,
    mac_tag,
    mac_verify,
)
from .errors import IntegrityFailure, LengthMismatchError, ParameterError
from .protocol import CloudClient
from .store import GDStore
from .transform import delete_transform_batch, reinsert_batch

SEED_BYTES = 4
MASTER_SEED_BYTES = 32

_MAC_KIND = {32: 1, 64: 2}
_MAC_LEN = {v: k for k, v in _MAC_KIND.items()}
_U16 = struct.Struct("<H")


@dataclass(frozen=True)
class ShareToken:
    """Everything a receiver needs: the file tag and both keys."""

    tag: FileTag
    mac_key: bytes
    enc_key: bytes

    def __post_init__(self):
        object.__setattr__(self, "tag", FileTag(self.tag))
        KeyMaterial(self.mac_key, self.enc_key)

    @property
    def keys(self) -> KeyMaterial:
        return KeyMaterial(self.mac_key, self.enc_key)

    @property
    def bit_size(self) -> int:
        return 8 * (len(self.tag) + len(self.mac_key) + len(self.enc_key))

    def to_bytes(self) -> bytes:
        """``[u8 mac_kind][tag][u16 klen][k_h][u16 klen][k_e]``; 1 = HMAC-SHA-256, 2 = HMAC-SHA-512."""
        return (
            bytes([_MAC_KIND[len(self.tag)]])
            + self.tag
            + _U16.pack(len(self.mac_key))
            + self.mac_key
            + _U16.pack(len(self.enc_key))
            + self.enc_key
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> ShareToken:
        try:
            tlen = _MAC_LEN[data[0]]
            pos = 1 + tlen
            tag = data[1:pos]
            fields = []
            for _ in range(2):
                (klen,) = _U16.unpack_from(data, pos)
                fields.append(bytes(data[pos + 2 : pos + 2 + klen]))
                if len(fields[-1]) != klen:
                    raise ParameterError("truncated key")
                pos += 2 + klen
        except (IndexError, KeyError, struct.error) as exc:
            raise ParameterError("malformed share token") from exc
        if pos != len(data) or len(tag) != tlen:
            raise ParameterError("malformed share token")
        return cls(FileTag(bytes(tag)), *fields)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> ShareToken:
        return cls.from_bytes(Path(path).read_bytes())


@contextlib.contextmanager
def resolve_cloud(cloud):
    """Yield something with ``put_payload``/``get_payload``.

    ``cloud`` may be a :class:`GDStore` (in-process), a connected
    :class:`CloudClient`, or an address for a fresh connection.
    """
    if isinstance(cloud, (GDStore, CloudClient)) or hasattr(cloud, "get_payload"):
        yield cloud
        return
    with CloudClient(cloud) as client:
        yield client


def deviation_plaintexts(seeds, values: np.ndarray, q: int) -> list[bytes]:
    if q == 8:
        raw = np.ascontiguousarray(values, dtype=np.uint8)
        return [s + raw[i].tobytes() for i, s in enumerate(seeds)]
    return [s + pack_symbols(values[i], q) for i, s in enumerate(seeds)]


def split_plaintexts(plaintexts, n_del: int, q: int, seed_bytes: int):
    """Inverse of :func:`deviation_plaintexts`."""
    vbytes = (n_del * q + 7) // 8
    seeds = [p[:seed_bytes] for p in plaintexts]
    if q == 8:
        blob = b"".join(p[seed_bytes:] for p in plaintexts)
        values = np.frombuffer(blob, dtype=np.uint8).reshape(len(plaintexts), n_del)
    else:
        values = np.stack([unpack_symbols(p[seed_bytes:], q, n_del) for p in plaintexts]) if plaintexts else (
            np.empty((0, n_del), dtype=np.uint32)
        )
    if any(len(p) != seed_bytes + vbytes for p in plaintexts):
        raise LengthMismatchError("deviation plaintext has the wrong size")
    return seeds, values


def sender_store(
    file_bytes: bytes,
    params: ChunkingParams,
    n_del: int,
    keys: KeyMaterial,
    cloud,
    *,
    pad_block_bits: int = 0,
    master_seed: bytes | None = None,
) -> ShareToken:
    """Transform, encrypt and upload a file; return its share token.

    Every chunk gets its own 32-bit seed drawn from a per-file master seed.
    The master is fresh randomness unless ``master_seed`` pins it; pinning it
    makes deletion positions depend only on the chunk index, which is what
    lets the cloud deduplicate bases across files.
    """
    if not 0 <= n_del < params.n_org:
        raise ParameterError(f"need 0 <= n_del < n_org ({params.n_org}), got {n_del}")
    data = bytes(file_bytes)
    tag = mac_tag(keys.mac_key, data)
    manifest = FileManifest(tag, params.chunk_count(len(data)), len(data), params, n_del, 8 * SEED_BYTES)
    matrix = chunk_matrix(data, params)
    master = os.urandom(MASTER_SEED_BYTES) if master_seed is None else bytes(master_seed)
    seeds = derive_chunk_seeds(master, manifest.chunk_count, SEED_BYTES)
    bases, values = delete_transform_batch(matrix, seeds, n_del)
    enc = encrypt_all(keys.enc_key, deviation_plaintexts(seeds, values, params.symbol_bits), pad_block_bits)
    with resolve_cloud(cloud) as c:
        c.put_payload(tag, manifest, bases, enc)
    return ShareToken(tag, keys.mac_key, keys.enc_key)


def receiver_fetch(token: ShareToken, cloud) -> bytes:
    """Download, decrypt, reinsert and verify; return the file only if its MAC checks out."""
    with resolve_cloud(cloud) as c:
        manifest, bases, enc = c.get_payload(token.tag)
    if manifest.file_tag != token.tag:
        raise IntegrityFailure("cloud returned an object under a different tag")
    if bases.shape != (manifest.chunk_count, manifest.n_base) or len(enc) != manifest.chunk_count:
        raise IntegrityFailure("object shape disagrees with its manifest")
    q, seed_bytes = manifest.params.symbol_bits, manifest.seed_bits // 8
    plain_len = seed_bytes + (manifest.n_del * q + 7) // 8
    plaintexts = decrypt_all(token.enc_key, enc, plain_len)
    seeds, values = split_plaintexts(plaintexts, manifest.n_del, q, seed_bytes)
    chunks = reinsert_batch(bases, seeds, values.astype(bases.dtype, copy=False))
    data = assemble_matrix(chunks, manifest)
    if not mac_verify(token.mac_key, data, token.tag):
        raise IntegrityFailure("reconstructed file does not match its tag")
    return data
