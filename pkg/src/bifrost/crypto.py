"""PRNG stream, HMAC tags and AES-GCM sealing of deviations.

The PRNG is ChaCha20 (RFC 8439 block function, zero nonce, counter from 0)
keyed with ``SHA-256(PRNG_DOMAIN || seed)``. Sender and receiver therefore
derive identical streams from a seed; golden vectors live in the tests.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import struct
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import DecryptionFailure, LengthMismatchError, ParameterError
from .kernels import impl

PRNG_DOMAIN = b"bifrost/prng/v1\x00"

MAC_KEY_BITS = (256, 512)
ENC_KEY_BITS = (128, 256)
_MAC_HASH = {32: hashlib.sha256, 64: hashlib.sha512}

NONCE_BYTES = 12
AUTH_TAG_BYTES = 16


# --- PRNG -------------------------------------------------------------------

def stream_key(seed: bytes) -> bytes:
    """32-byte ChaCha20 key for a seed of any width."""
    return hashlib.sha256(PRNG_DOMAIN + bytes(seed)).digest()


def uniform_int(next_byte, r: int) -> int:
    """Uniform integer in ``[0, r)`` by rejection over the fewest whole bytes.

    ``next_byte`` is a zero-argument callable or an iterator yielding byte
    values. Draws that land at or above the largest multiple of ``r`` that
    fits in the byte span are discarded.
    """
    if r < 1:
        raise ParameterError("range must be positive")
    if not callable(next_byte):
        it = iter(next_byte)
        next_byte = it.__next__
    span, nb = 256, 1
    while span < r:
        span <<= 8
        nb += 1
    limit = span - span % r
    while True:
        v = 0
        for _ in range(nb):
            v = (v << 8) | next_byte()
        if v < limit:
            return v % r


class PrngStream:
    """Deterministic, unbounded byte stream for one seed."""

    _BLOCK = 4096

    def __init__(self, seed: bytes):
        self.seed = bytes(seed)
        self._key = stream_key(self.seed)
        self._buf = b""
        self._pos = 0
        self._produced = 0

    def _refill(self) -> None:
        # keystream is generated in whole 64-byte ChaCha blocks
        self._buf = impl.chacha20_keystream(self._key, self._BLOCK, self._produced // 64)
        self._produced += self._BLOCK
        self._pos = 0

    def next_byte(self) -> int:
        if self._pos == len(self._buf):
            self._refill()
        self._pos += 1
        return self._buf[self._pos - 1]

    def read(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            if self._pos == len(self._buf):
                self._refill()
            take = min(n - len(out), len(self._buf) - self._pos)
            out += self._buf[self._pos : self._pos + take]
            self._pos += take
        return bytes(out)

    def uniform_int(self, r: int) -> int:
        return uniform_int(self.next_byte, r)

    def __iter__(self) -> Iterator[int]:
        while True:
            yield self.next_byte()


def prng_stream(seed: bytes) -> PrngStream:
    return PrngStream(seed)


def derive_chunk_seeds(master: bytes, count: int, seed_bytes: int = 4) -> list[bytes]:
    """Per-chunk seeds: the first ``seed_bytes`` of the stream for ``master || u64be(i)``."""
    return [
        impl.chacha20_keystream(stream_key(master + i.to_bytes(8, "big")), seed_bytes)
        for i in range(count)
    ]


# --- keys and MAC -----------------------------------------------------------

@dataclass(frozen=True)
class KeyMaterial:
    mac_key: bytes
    enc_key: bytes

    def __post_init__(self):
        if len(self.mac_key) * 8 not in MAC_KEY_BITS:
            raise ParameterError(f"MAC key must be one of {MAC_KEY_BITS} bits")
        if len(self.enc_key) * 8 not in ENC_KEY_BITS:
            raise ParameterError(f"encryption key must be one of {ENC_KEY_BITS} bits")

    @classmethod
    def generate(cls, mac_bits: int = 256, enc_bits: int = 128) -> KeyMaterial:
        return cls(os.urandom(mac_bits // 8), os.urandom(enc_bits // 8))

    @property
    def mac_bits(self) -> int:
        return len(self.mac_key) * 8

    @property
    def enc_bits(self) -> int:
        return len(self.enc_key) * 8


class FileTag(bytes):
    """HMAC output; doubles as the object identifier on the store."""

    def __new__(cls, value: bytes):
        obj = super().__new__(cls, value)
        if len(obj) not in _MAC_HASH:
            raise ParameterError("file tag must be 256 or 512 bits")
        return obj

    @property
    def bit_size(self) -> int:
        return len(self) * 8


_HASH_NAMES = {"sha256": hashlib.sha256, "sha512": hashlib.sha512}


def _mac_hash(mac_key: bytes, hash_name: str | None):
    if hash_name is not None:
        try:
            return _HASH_NAMES[hash_name]
        except KeyError:
            raise ParameterError(f"hash must be one of {sorted(_HASH_NAMES)}") from None
    digest = _MAC_HASH.get(len(mac_key))
    if digest is None:
        raise ParameterError(f"MAC key must be one of {MAC_KEY_BITS} bits")
    return digest


def mac_tag(mac_key: bytes, message: bytes, hash_name: str | None = None) -> FileTag:
    """HMAC-SHA-256 for 256-bit keys, HMAC-SHA-512 for 512-bit keys.

    ``hash_name`` ("sha256" or "sha512") picks the hash explicitly and then
    accepts keys of any length.
    """
    return FileTag(hmac.new(mac_key, message, _mac_hash(mac_key, hash_name)).digest())


def mac_verify(mac_key: bytes, message: bytes, tag: bytes, hash_name: str | None = None) -> bool:
    try:
        digest = _mac_hash(mac_key, hash_name)
    except ParameterError:
        return False
    return hmac.compare_digest(hmac.new(mac_key, message, digest).digest(), bytes(tag))


# --- authenticated encryption -------------------------------------------------

_U16 = struct.Struct(">H")  # length prefixes of EncryptedDeviation fields


@dataclass(frozen=True)
class EncryptedDeviation:
    nonce: bytes
    ciphertext: bytes
    auth_tag: bytes

    @property
    def stored_size_bits(self) -> int:
        return 8 * (len(self.nonce) + len(self.ciphertext) + len(self.auth_tag))

    def to_bytes(self) -> bytes:
        parts = []
        for f in (self.nonce, self.ciphertext, self.auth_tag):
            if len(f) > 0xFFFF:
                raise ParameterError("field longer than 65535 bytes")
            parts.append(_U16.pack(len(f)))
            parts.append(f)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data, offset: int = 0) -> tuple[EncryptedDeviation, int]:
        fields = []
        pos = offset
        for _ in range(3):
            if pos + 2 > len(data):
                raise LengthMismatchError("truncated encrypted deviation")
            (n,) = _U16.unpack_from(data, pos)
            pos += 2
            if pos + n > len(data):
                raise LengthMismatchError("truncated encrypted deviation")
            fields.append(bytes(data[pos : pos + n]))
            pos += n
        return cls(*fields), pos


def _pad(plaintext: bytes, pad_block_bits: int) -> bytes:
    if pad_block_bits == 0:
        return plaintext
    if pad_block_bits != 128:
        raise ParameterError("pad_block_bits must be 0 or 128")
    block = pad_block_bits // 8
    padded_len = max(block, -(-len(plaintext) // block) * block)
    return plaintext + bytes(padded_len - len(plaintext))


def _aead(enc_key: bytes) -> AESGCM:
    if len(enc_key) * 8 not in ENC_KEY_BITS:
        raise ParameterError(f"encryption key must be one of {ENC_KEY_BITS} bits")
    return AESGCM(enc_key)


def _seal(aead: AESGCM, plaintext: bytes, pad_block_bits: int) -> EncryptedDeviation:
    nonce = os.urandom(NONCE_BYTES)
    sealed = aead.encrypt(nonce, _pad(plaintext, pad_block_bits), None)
    return EncryptedDeviation(nonce, sealed[:-AUTH_TAG_BYTES], sealed[-AUTH_TAG_BYTES:])


def _open(aead: AESGCM, ed: EncryptedDeviation, plaintext_len: int | None) -> bytes:
    if len(ed.nonce) != NONCE_BYTES or len(ed.auth_tag) != AUTH_TAG_BYTES:
        raise DecryptionFailure("malformed nonce or authentication tag")
    try:
        plain = aead.decrypt(ed.nonce, ed.ciphertext + ed.auth_tag, None)
    except InvalidTag as exc:
        raise DecryptionFailure("authentication failed") from exc
    if plaintext_len is None:
        return plain
    if len(plain) == plaintext_len:
        return plain
    if len(plain) != len(_pad(bytes(plaintext_len), 128)) or any(plain[plaintext_len:]):
        raise DecryptionFailure("decrypted length does not match the expected deviation size")
    return plain[:plaintext_len]


def encrypt(enc_key: bytes, plaintext: bytes, pad_block_bits: int = 0) -> EncryptedDeviation:
    """AES-GCM with a fresh random 96-bit nonce per call.

    ``pad_block_bits=128`` zero-pads the plaintext to whole 128-bit blocks
    (at least one). The true length is not stored: pass it to
    :func:`decrypt` to strip the padding.
    """
    return _seal(_aead(enc_key), plaintext, pad_block_bits)


def decrypt(enc_key: bytes, ed: EncryptedDeviation, plaintext_len: int | None = None) -> bytes:
    return _open(_aead(enc_key), ed, plaintext_len)


def encrypt_all(enc_key: bytes, plaintexts: Iterable[bytes], pad_block_bits: int = 0) -> list[EncryptedDeviation]:
    aead = _aead(enc_key)
    _pad(b"", pad_block_bits)
    return [_seal(aead, p, pad_block_bits) for p in plaintexts]


def decrypt_all(enc_key: bytes, eds: Sequence[EncryptedDeviation], plaintext_len: int | None = None) -> list[bytes]:
    aead = _aead(enc_key)
    return [_open(aead, ed, plaintext_len) for ed in eds]


def padded_size_bits(plaintext_bits: int, pad_block_bits: int) -> int:
    """Ciphertext payload size for a plaintext of ``plaintext_bits`` (byte-rounded)."""
    return 8 * len(_pad(bytes(-(-plaintext_bits // 8)), pad_block_bits))
