"""Symbol strings, chunking parameters, file manifests and fixed-size chunking."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError, ParameterError

MAX_SYMBOL_BITS = 32


def symbol_dtype(q: int) -> np.dtype:
    """Smallest unsigned dtype holding a ``q``-bit symbol."""
    if not 1 <= q <= MAX_SYMBOL_BITS:
        raise ParameterError(f"symbol width must be in [1, {MAX_SYMBOL_BITS}] bits, got {q}")
    if q <= 8:
        return np.dtype(np.uint8)
    if q <= 16:
        return np.dtype(np.uint16)
    return np.dtype(np.uint32)


def _bits_to_symbols(bits: np.ndarray, q: int) -> np.ndarray:
    # bits: (..., q) array of 0/1, most significant first
    weights = (np.uint64(1) << np.arange(q - 1, -1, -1, dtype=np.uint64))
    return (bits.astype(np.uint64) @ weights).astype(symbol_dtype(q))


def pack_symbols(symbols: np.ndarray, q: int) -> bytes:
    """Big-endian bit packing of ``q``-bit symbols; the last byte is zero-padded."""
    arr = np.asarray(symbols)
    if q == 8:
        return arr.astype(np.uint8, copy=False).tobytes()
    if q == 16:
        return arr.astype(">u2").tobytes()
    if q == 32:
        return arr.astype(">u4").tobytes()
    shifts = np.arange(q - 1, -1, -1, dtype=np.uint64)
    bits = (arr.astype(np.uint64)[:, None] >> shifts) & np.uint64(1)
    return np.packbits(bits.astype(np.uint8).ravel()).tobytes()


def unpack_symbols(data: bytes, q: int, count: int) -> np.ndarray:
    """Inverse of :func:`pack_symbols`."""
    nbytes = (count * q + 7) // 8
    if len(data) < nbytes:
        raise LengthMismatchError(f"need {nbytes} bytes for {count} symbols, got {len(data)}")
    if q == 8:
        return np.frombuffer(data, dtype=np.uint8, count=count).copy()
    if q == 16:
        return np.frombuffer(data, dtype=">u2", count=count).astype(np.uint16)
    if q == 32:
        return np.frombuffer(data, dtype=">u4", count=count).astype(np.uint32)
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=nbytes))[: count * q]
    return _bits_to_symbols(bits.reshape(count, q), q)


@dataclass(frozen=True, eq=False)
class SymbolString:
    """Immutable sequence of ``q``-bit unsigned symbols."""

    symbols: np.ndarray
    q: int = 8

    def __post_init__(self):
        dt = symbol_dtype(self.q)
        raw = np.asarray(self.symbols)
        if raw.ndim != 1:
            raise ParameterError("symbols must be one-dimensional")
        if raw.size:
            if raw.dtype.kind not in "ui" or raw.min() < 0 or int(raw.max()) >= (1 << self.q):
                raise ParameterError(f"symbols must be integers in [0, 2^{self.q})")
        arr = raw.astype(dt, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    @classmethod
    def wrap(cls, arr: np.ndarray, q: int) -> SymbolString:
        """Adopt an array already known to hold valid symbols of the right dtype."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "symbols", arr)
        object.__setattr__(obj, "q", q)
        return obj

    @classmethod
    def from_bytes(cls, data: bytes, q: int, count: int) -> SymbolString:
        arr = unpack_symbols(data, q, count)
        arr.setflags(write=False)
        return cls.wrap(arr, q)

    def to_bytes(self) -> bytes:
        return pack_symbols(self.symbols, self.q)

    @property
    def bit_size(self) -> int:
        return len(self.symbols) * self.q

    def tolist(self) -> list[int]:
        return self.symbols.tolist()

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols.tolist())

    def __getitem__(self, i):
        return self.symbols[i]

    def __eq__(self, other):
        if not isinstance(other, SymbolString):
            return NotImplemented
        return self.q == other.q and np.array_equal(self.symbols, other.symbols)

    def __hash__(self):
        return hash((self.q, self.symbols.tobytes()))

    def __repr__(self):
        body = self.symbols.tolist()
        if len(body) > 12:
            body = f"{body[:12]}... ({len(body)} symbols)"
        return f"SymbolString({body}, q={self.q})"


@dataclass(frozen=True)
class ChunkingParams:
    chunk_bits: int = 2048
    symbol_bits: int = 8

    def __post_init__(self):
        if self.chunk_bits <= 0 or self.symbol_bits <= 0:
            raise ParameterError("chunk_bits and symbol_bits must be positive")
        symbol_dtype(self.symbol_bits)
        if self.chunk_bits % self.symbol_bits:
            raise ParameterError("symbol_bits must divide chunk_bits")

    @property
    def n_org(self) -> int:
        return self.chunk_bits // self.symbol_bits

    def chunk_count(self, byte_length: int) -> int:
        return -(-byte_length * 8 // self.chunk_bits)


_MANIFEST_HEAD = struct.Struct("<IQIBIB")


@dataclass(frozen=True)
class FileManifest:
    """Public per-file metadata kept next to the object on the store."""

    file_tag: bytes
    chunk_count: int
    original_byte_length: int
    params: ChunkingParams = field(default_factory=ChunkingParams)
    n_del: int = 0
    seed_bits: int = 32

    def __post_init__(self):
        if self.original_byte_length < 0:
            raise ParameterError("original_byte_length must be non-negative")
        if self.chunk_count != self.params.chunk_count(self.original_byte_length):
            raise ParameterError("chunk_count disagrees with original_byte_length")
        if not 0 <= self.n_del < self.params.n_org:
            raise ParameterError("need 0 <= n_del < n_org")
        if self.seed_bits <= 0 or self.seed_bits % 8 or self.seed_bits > 255:
            raise ParameterError("seed_bits must be a positive multiple of 8 below 256")
        if not 1 <= len(self.file_tag) <= 255:
            raise ParameterError("file tag must be 1..255 bytes")

    @property
    def n_base(self) -> int:
        return self.params.n_org - self.n_del

    @property
    def deviation_bits(self) -> int:
        """Plaintext size of one deviation: seed plus deleted symbols."""
        return self.seed_bits + self.n_del * self.params.symbol_bits

    def to_bytes(self) -> bytes:
        return (
            bytes([len(self.file_tag)])
            + self.file_tag
            + _MANIFEST_HEAD.pack(
                self.chunk_count,
                self.original_byte_length,
                self.params.chunk_bits,
                self.params.symbol_bits,
                self.n_del,
                self.seed_bits,
            )
        )

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple[FileManifest, int]:
        """Decode a manifest at ``offset``; returns it with the offset just past it."""
        try:
            tlen = data[offset]
            tag = bytes(data[offset + 1 : offset + 1 + tlen])
            if len(tag) != tlen:
                raise LengthMismatchError("truncated manifest tag")
            pos = offset + 1 + tlen
            cc, length, cbits, qbits, n_del, sbits = _MANIFEST_HEAD.unpack_from(data, pos)
        except (IndexError, struct.error) as exc:
            raise LengthMismatchError("truncated manifest") from exc
        manifest = cls(tag, cc, length, ChunkingParams(cbits, qbits), n_del, sbits)
        return manifest, pos + _MANIFEST_HEAD.size


def chunk_matrix(data: bytes, params: ChunkingParams) -> np.ndarray:
    """Split ``data`` into a (chunks, n_org) symbol matrix, zero-padding the tail."""
    n_chunks = params.chunk_count(len(data))
    q, n_org = params.symbol_bits, params.n_org
    dt = symbol_dtype(q)
    if n_chunks == 0:
        return np.empty((0, n_org), dtype=dt)
    if params.chunk_bits % 8 == 0 and q in (8, 16, 32):
        chunk_bytes = params.chunk_bits // 8
        buf = np.zeros(n_chunks * chunk_bytes, dtype=np.uint8)
        buf[: len(data)] = np.frombuffer(data, dtype=np.uint8)
        if q == 8:
            return buf.reshape(n_chunks, n_org)
        return buf.view(">u2" if q == 16 else ">u4").astype(dt).reshape(n_chunks, n_org)
    bits = np.zeros(n_chunks * params.chunk_bits, dtype=np.uint8)
    raw = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    bits[: len(raw)] = raw
    return _bits_to_symbols(bits.reshape(n_chunks * n_org, q), q).reshape(n_chunks, n_org)


def chunk_file(data: bytes, params: ChunkingParams) -> list[SymbolString]:
    q = params.symbol_bits
    out = []
    for row in chunk_matrix(data, params):
        row.setflags(write=False)
        out.append(SymbolString.wrap(row, q))
    return out


def assemble_matrix(matrix: np.ndarray, manifest: FileManifest) -> bytes:
    """Inverse of :func:`chunk_matrix` using the manifest's true length."""
    params = manifest.params
    if matrix.shape != (manifest.chunk_count, params.n_org):
        raise LengthMismatchError(
            f"expected {manifest.chunk_count} chunks of {params.n_org} symbols, "
            f"got shape {matrix.shape}"
        )
    q = params.symbol_bits
    if params.chunk_bits % 8 == 0 and q in (8, 16, 32):
        dt = {8: np.uint8, 16: ">u2", 32: ">u4"}[q]
        raw = np.ascontiguousarray(matrix).astype(dt, copy=False).tobytes()
    else:
        raw = pack_symbols(matrix.ravel(), q)
    return raw[: manifest.original_byte_length]


def assemble_file(chunks, manifest: FileManifest) -> bytes:
    params = manifest.params
    if len(chunks) != manifest.chunk_count:
        raise LengthMismatchError(f"expected {manifest.chunk_count} chunks, got {len(chunks)}")
    if not chunks:
        return b""
    for c in chunks:
        if len(c) != params.n_org or c.q != params.symbol_bits:
            raise LengthMismatchError("chunk width does not match the manifest")
    return assemble_matrix(np.stack([c.symbols for c in chunks]), manifest)
