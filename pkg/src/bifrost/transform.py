"""Client-side deletion transform and its inverse.

Positions index the ORIGINAL chunk and are removed simultaneously; the
deviation keeps the deleted values in draw order.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .core import SymbolString, pack_symbols, symbol_dtype, unpack_symbols
from .crypto import prng_stream, stream_key
from .errors import LengthMismatchError, ParameterError
from .kernels import impl

PrngFactory = Callable[[bytes], object]


@dataclass(frozen=True)
class DeletionDeviation:
    """Client secret for one chunk: PRNG seed and deleted symbols."""

    seed: bytes
    deleted_values: tuple[int, ...]
    q: int = 8

    @property
    def n_del(self) -> int:
        return len(self.deleted_values)

    @property
    def bit_size(self) -> int:
        return 8 * len(self.seed) + self.n_del * self.q

    def to_bytes(self) -> bytes:
        """Seed bytes, then the values as big-endian ``q``-bit fields; no length prefix."""
        values = np.asarray(self.deleted_values, dtype=symbol_dtype(self.q))
        return bytes(self.seed) + pack_symbols(values, self.q)

    @classmethod
    def from_bytes(cls, data: bytes, n_del: int, q: int = 8, seed_bytes: int = 4) -> DeletionDeviation:
        need = seed_bytes + (n_del * q + 7) // 8
        if len(data) != need:
            raise LengthMismatchError(f"deviation must be {need} bytes, got {len(data)}")
        values = unpack_symbols(data[seed_bytes:], q, n_del)
        return cls(bytes(data[:seed_bytes]), tuple(values.tolist()), q)


@dataclass(frozen=True)
class OutsourcePiece:
    base: SymbolString

    def __len__(self) -> int:
        return len(self.base)


def derive_positions(seed: bytes, n_org: int, n_del: int, prng: PrngFactory = prng_stream) -> list[int]:
    """``n_del`` distinct indices in ``[0, n_org)`` in draw order.

    Out-of-range draws are rejected inside ``uniform_int``; repeats are
    skipped. ``prng`` maps a seed to an object with ``uniform_int(r)``.
    """
    if n_org <= 0:
        raise ParameterError("n_org must be positive")
    if not 0 <= n_del < n_org:
        raise ParameterError(f"need 0 <= n_del < n_org, got n_del={n_del}, n_org={n_org}")
    if prng is prng_stream:
        key = np.frombuffer(stream_key(seed), dtype=np.uint8).reshape(1, 32)
        return impl.derive_positions_batch(key, n_org, n_del)[0].tolist()
    stream = prng(seed)
    out: list[int] = []
    seen: set[int] = set()
    while len(out) < n_del:
        v = stream.uniform_int(n_org)
        if v in seen:
            continue
        seen.add(v)
        out.append(v)
    return out


def delete_transform(
    chunk: SymbolString, seed: bytes, n_del: int, prng: PrngFactory = prng_stream
) -> tuple[OutsourcePiece, DeletionDeviation]:
    positions = derive_positions(seed, len(chunk), n_del, prng)
    keep = np.ones(len(chunk), dtype=bool)
    keep[positions] = False
    base = chunk.symbols[keep]
    base.setflags(write=False)
    values = tuple(chunk.symbols[positions].tolist())
    return OutsourcePiece(SymbolString.wrap(base, chunk.q)), DeletionDeviation(bytes(seed), values, chunk.q)


def reinsert(
    piece: OutsourcePiece, dev: DeletionDeviation, n_org: int, prng: PrngFactory = prng_stream
) -> SymbolString:
    """Rebuild the chunk by putting deleted values back at their positions."""
    base = piece.base
    if len(base) + dev.n_del != n_org:
        raise LengthMismatchError(
            f"piece ({len(base)}) + deviation ({dev.n_del}) != n_org ({n_org})"
        )
    if dev.q != base.q:
        raise LengthMismatchError("symbol width of piece and deviation differ")
    positions = derive_positions(dev.seed, n_org, dev.n_del, prng)
    # ascending insertion: earlier inserts never shift later target indices
    out = list(base.symbols.tolist())
    for pos, value in sorted(zip(positions, dev.deleted_values)):
        out.insert(pos, value)
    arr = np.asarray(out, dtype=base.symbols.dtype)
    arr.setflags(write=False)
    return SymbolString.wrap(arr, base.q)


# --- batched forms used by the sharing pipeline -------------------------------

def positions_for_seeds(seeds: Sequence[bytes], n_org: int, n_del: int) -> np.ndarray:
    keys = np.frombuffer(b"".join(stream_key(s) for s in seeds), dtype=np.uint8).reshape(len(seeds), 32)
    return impl.derive_positions_batch(keys, n_org, n_del)


def delete_transform_batch(chunks: np.ndarray, seeds: Sequence[bytes], n_del: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``chunks`` -> (bases, deleted values), one seed per row."""
    if len(seeds) != len(chunks):
        raise LengthMismatchError("one seed per chunk required")
    positions = positions_for_seeds(seeds, chunks.shape[1], n_del)
    return impl.delete_batch(np.ascontiguousarray(chunks), positions)


def reinsert_batch(bases: np.ndarray, seeds: Sequence[bytes], values: np.ndarray) -> np.ndarray:
    if len(seeds) != len(bases) or len(values) != len(bases):
        raise LengthMismatchError("seeds, bases and values must have one row per chunk")
    n_del = values.shape[1]
    positions = positions_for_seeds(seeds, bases.shape[1] + n_del, n_del)
    return impl.reinsert_batch(
        np.ascontiguousarray(bases), positions, np.ascontiguousarray(values, dtype=bases.dtype)
    )
