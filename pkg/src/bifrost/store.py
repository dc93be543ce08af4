"""Generalized-deduplication object store.

Incoming bases are matched against stored unique bases of the same length.
An exact duplicate becomes a bare pointer; a base within ``t_max`` adjacent
swaps / value changes of a stored one becomes a pointer plus delta, when that
is cheaper than storing it. Everything else is stored verbatim.

Files in the store directory (all integers little-endian)::

    store.json   configuration (n_base, symbol_bits, mode, t_max, pointer_bits)
    bases.log    b"BFBASES1", then [u32 len][u8 type][payload][u32 crc32] per record
    objects.log  b"BFOBJS01", then [u32 len][entry][u32 crc32] per object
    index.bin    b"BFINDEX1", then [u8 tag_len][tag][u64 objects.log offset]

Unique payload is the packed base; Deduped payload is
``[u32 base_id][u16 op_count]`` then ops ``[u8 0][u16 pos][u32 value]``
(change value) or ``[u8 1][u16 pos]`` (adjacent swap). The crc covers type
and payload. Record ids are ordinals in ``bases.log``. Object entries hold the
manifest, a sha256 content digest, ``[u32 count]``, the record ids (u32) and the
encrypted deviations in their own wire form (big-endian field lengths).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import threading
import zlib
from array import array
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .core import FileManifest, SymbolString, pack_symbols, symbol_dtype, unpack_symbols
from .crypto import EncryptedDeviation
from .distance import swap_change_alignment
from .errors import ConflictError, CorruptionError, LengthMismatchError, NotFoundError, ParameterError
from .kernels import impl
from .transform import OutsourcePiece

log = logging.getLogger(__name__)

BASES_MAGIC = b"BFBASES1"
OBJECTS_MAGIC = b"BFOBJS01"
INDEX_MAGIC = b"BFINDEX1"

TYPE_UNIQUE = 0
TYPE_DEDUPED = 1
OP_CHANGE = 0
OP_SWAP = 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_DEDUP_HEAD = struct.Struct("<IH")
_CHANGE = struct.Struct("<BHI")
_SWAP = struct.Struct("<BH")


@dataclass(frozen=True)
class ChangeValue:
    pos: int
    value: int


@dataclass(frozen=True)
class AdjSwap:
    """Exchange positions ``pos`` and ``pos + 1``."""

    pos: int


DeltaOp = Union[ChangeValue, AdjSwap]


@dataclass(frozen=True)
class Unique:
    base: SymbolString


@dataclass(frozen=True)
class Deduped:
    base_id: int
    delta: tuple[DeltaOp, ...] = ()


CloudRecord = Union[Unique, Deduped]


@dataclass(frozen=True)
class StoreStats:
    """Bit accounting of everything the store keeps.

    ``c_size`` covers bases, dedup records and encrypted deviations; tags
    are reported apart because the compression ratio charges them once per
    file on top of ``c_size``.
    """

    unique_base_bits: int = 0
    dedup_record_bits: int = 0
    enc_local_bits: int = 0
    tag_bits: int = 0
    n_f: int = 0
    original_bits: int = 0
    unique_records: int = 0
    dedup_records: int = 0

    @property
    def c_size(self) -> int:
        return self.unique_base_bits + self.dedup_record_bits + self.enc_local_bits


def delta_cost_bits(delta, n_base: int, q: int) -> int:
    """Opcode bit plus position bits per op, plus ``q`` value bits for changes."""
    pos_bits = (n_base - 1).bit_length() if n_base > 1 else 0
    total = 0
    for op in delta:
        total += 1 + pos_bits
        if isinstance(op, ChangeValue):
            total += q
    return total


def apply_delta(base: np.ndarray, delta) -> np.ndarray:
    out = np.array(base, copy=True)
    n = len(out)
    for op in delta:
        if isinstance(op, AdjSwap):
            if not 0 <= op.pos < n - 1:
                raise CorruptionError(f"swap position {op.pos} out of range")
            out[op.pos], out[op.pos + 1] = out[op.pos + 1], out[op.pos]
        elif isinstance(op, ChangeValue):
            if not 0 <= op.pos < n:
                raise CorruptionError(f"change position {op.pos} out of range")
            out[op.pos] = op.value
        else:
            raise TypeError(f"not a delta op: {op!r}")
    return out


def delta_from_alignment(src: np.ndarray, dst: np.ndarray, path) -> tuple[DeltaOp, ...]:
    """Ops realising a token assignment: bubble swaps first, then value changes."""
    n = len(src)
    order = list(range(n))  # order[pos] = source token currently at pos
    ops: list[DeltaOp] = []
    for p in range(n):
        j = int(path[p])
        c = order.index(j, p)
        for k in range(c - 1, p - 1, -1):
            order[k], order[k + 1] = order[k + 1], order[k]
            ops.append(AdjSwap(k))
    for p in range(n):
        if src[order[p]] != dst[p]:
            ops.append(ChangeValue(p, int(dst[p])))
    return tuple(ops)


# --- record codec -----------------------------------------------------------

def encode_record(record: CloudRecord, q: int) -> bytes:
    if isinstance(record, Unique):
        body = bytes([TYPE_UNIQUE]) + record.base.to_bytes()
    else:
        parts = [bytes([TYPE_DEDUPED]), _DEDUP_HEAD.pack(record.base_id, len(record.delta))]
        for op in record.delta:
            if isinstance(op, ChangeValue):
                parts.append(_CHANGE.pack(OP_CHANGE, op.pos, op.value))
            else:
                parts.append(_SWAP.pack(OP_SWAP, op.pos))
        body = b"".join(parts)
    body += _U32.pack(zlib.crc32(body))
    return _U32.pack(len(body)) + body


def decode_record(body: bytes, n_base: int, q: int, *, verify: bool = True) -> CloudRecord:
    """Decode one record body (without its length prefix)."""
    if len(body) < 5:
        raise CorruptionError("record too short")
    payload, (crc,) = body[:-4], _U32.unpack_from(body, len(body) - 4)
    if verify and zlib.crc32(payload) != crc:
        raise CorruptionError("record checksum mismatch")
    kind = payload[0]
    try:
        if kind == TYPE_UNIQUE:
            nbytes = (n_base * q + 7) // 8
            if len(payload) != 1 + nbytes:
                raise CorruptionError("unique record has wrong size")
            return Unique(SymbolString.from_bytes(payload[1:], q, n_base))
        if kind == TYPE_DEDUPED:
            base_id, count = _DEDUP_HEAD.unpack_from(payload, 1)
            pos = 1 + _DEDUP_HEAD.size
            ops: list[DeltaOp] = []
            for _ in range(count):
                code = payload[pos]
                if code == OP_CHANGE:
                    _, p, v = _CHANGE.unpack_from(payload, pos)
                    ops.append(ChangeValue(p, v))
                    pos += _CHANGE.size
                elif code == OP_SWAP:
                    _, p = _SWAP.unpack_from(payload, pos)
                    ops.append(AdjSwap(p))
                    pos += _SWAP.size
                else:
                    raise CorruptionError(f"unknown delta opcode {code}")
            if pos != len(payload):
                raise CorruptionError("trailing bytes in dedup record")
            for op in ops:
                if op.pos >= n_base or (isinstance(op, ChangeValue) and op.value >> q):
                    raise CorruptionError("delta op out of range")
            return Deduped(base_id, tuple(ops))
    except (IndexError, struct.error) as exc:
        raise CorruptionError("truncated record") from exc
    raise CorruptionError(f"unknown record type {kind}")


def record_cost_bits(record: CloudRecord, n_base: int, q: int, pointer_bits: int) -> int:
    if isinstance(record, Unique):
        return n_base * q
    return pointer_bits + delta_cost_bits(record.delta, n_base, q)


# --- object entries -----------------------------------------------------------

def _encode_object(manifest: FileManifest, digest: bytes, record_ids, enc_locals) -> bytes:
    ids = array("I", record_ids)
    if ids.itemsize != 4:
        raise RuntimeError("unsigned int is not 32-bit on this platform")
    body = b"".join(
        [
            manifest.to_bytes(),
            digest,
            _U32.pack(len(ids)),
            ids.tobytes() if _little_endian() else _byteswapped(ids),
            *(ed.to_bytes() for ed in enc_locals),
        ]
    )
    body += _U32.pack(zlib.crc32(body))
    return _U32.pack(len(body)) + body


def _decode_object(body: bytes, *, verify: bool = True):
    if len(body) < 4:
        raise CorruptionError("object entry too short")
    payload, (crc,) = body[:-4], _U32.unpack_from(body, len(body) - 4)
    if verify and zlib.crc32(payload) != crc:
        raise CorruptionError("object entry checksum mismatch")
    try:
        manifest, pos = FileManifest.from_bytes(payload)
        digest = bytes(payload[pos : pos + 32])
        pos += 32
        (count,) = _U32.unpack_from(payload, pos)
        pos += 4
        ids = array("I")
        ids.frombytes(payload[pos : pos + 4 * count])
        if not _little_endian():
            ids.byteswap()
        pos += 4 * count
        enc = []
        for _ in range(count):
            ed, pos = EncryptedDeviation.from_bytes(payload, pos)
            enc.append(ed)
    except (LengthMismatchError, ParameterError, struct.error, IndexError, ValueError) as exc:
        raise CorruptionError(f"malformed object entry: {exc}") from exc
    if pos != len(payload) or count != manifest.chunk_count:
        raise CorruptionError("object entry size mismatch")
    return manifest, digest, ids, enc


def _pread_frame(fd: int, offset: int, what: str) -> bytes:
    """Body of the ``[u32 len][body]`` frame at ``offset``; short reads are corruption."""
    head = os.pread(fd, 4, offset)
    if len(head) != 4:
        raise CorruptionError(f"{what} at offset {offset} is truncated")
    (length,) = _U32.unpack(head)
    body = os.pread(fd, length, offset + 4)
    if len(body) != length:
        raise CorruptionError(f"{what} at offset {offset} is truncated")
    return body


def _write_all(fd: int, data: bytes) -> None:
    view = memoryview(data)
    while view:
        view = view[os.write(fd, view):]


def _little_endian() -> bool:
    return array("I", [1]).tobytes()[0] == 1


def _byteswapped(ids: array) -> bytes:
    c = array("I", ids)
    c.byteswap()
    return c.tobytes()


def content_digest(manifest: FileManifest, piece_blob: bytes, enc_locals) -> bytes:
    h = hashlib.sha256(manifest.to_bytes())
    h.update(piece_blob)
    for ed in enc_locals:
        h.update(ed.to_bytes())
    return h.digest()


def piece_nbytes(n_base: int, q: int) -> int:
    return (n_base * q + 7) // 8


def pack_pieces(matrix: np.ndarray, q: int) -> bytes:
    """Row-wise packing; each row padded to whole bytes."""
    if q == 8:
        return np.ascontiguousarray(matrix, dtype=np.uint8).tobytes()
    return b"".join(pack_symbols(row, q) for row in matrix)


def unpack_pieces(blob: bytes, q: int, rows: int, n_base: int) -> np.ndarray:
    size = piece_nbytes(n_base, q)
    if len(blob) != rows * size:
        raise LengthMismatchError(f"piece blob must be {rows * size} bytes, got {len(blob)}")
    if q == 8:
        return np.frombuffer(blob, dtype=np.uint8).reshape(rows, n_base).copy()
    out = np.empty((rows, n_base), dtype=symbol_dtype(q))
    for r in range(rows):
        out[r] = unpack_symbols(blob[r * size : (r + 1) * size], q, n_base)
    return out


# --- the store ------------------------------------------------------------------

class GDStore:
    """Persistent generalized-deduplication store (single writer, many readers).

    ``mode`` is ``"gd"`` (duplicate + near-duplicate matching) or ``"exact"``
    (duplicates only). ``linear_scan=True`` compares against every unique base
    instead of using the block fingerprint index; results are identical.
    """

    def __init__(
        self,
        directory,
        *,
        n_base: int | None = None,
        symbol_bits: int | None = None,
        mode: str = "gd",
        t_max: int = 8,
        pointer_bits: int = 32,
        fsync: bool = False,
        linear_scan: bool = False,
        verify_checksums: bool = True,
    ):
        if mode not in ("gd", "exact"):
            raise ParameterError("mode must be 'gd' or 'exact'")
        if t_max < 0 or pointer_bits <= 0:
            raise ParameterError("t_max must be >= 0 and pointer_bits > 0")
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self.linear_scan = linear_scan
        self.verify_checksums = verify_checksums
        self._lock = threading.RLock()
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._unflushed: dict[int, np.ndarray] = {}  # unique bases not yet written to bases.log
        self._closed = False

        cfg_path = self.dir / "store.json"
        if cfg_path.exists():
            cfg = json.loads(cfg_path.read_text())
            for name, given in (("n_base", n_base), ("symbol_bits", symbol_bits)):
                if given is not None and cfg.get(name) not in (None, given):
                    raise ParameterError(f"store was created with {name}={cfg[name]}, not {given}")
            self.config = cfg
            if self.config.get("n_base") is None and n_base is not None:
                self.config.update(n_base=n_base, symbol_bits=symbol_bits)
                self._write_config()
        else:
            self.config = {
                "version": 1,
                "n_base": n_base,
                "symbol_bits": symbol_bits if n_base is not None else symbol_bits,
                "mode": mode,
                "t_max": t_max,
                "pointer_bits": pointer_bits,
            }
            self._write_config()

        self._bases_path = self.dir / "bases.log"
        self._objects_path = self.dir / "objects.log"
        self._index_path = self.dir / "index.bin"
        for path, magic in (
            (self._bases_path, BASES_MAGIC),
            (self._objects_path, OBJECTS_MAGIC),
            (self._index_path, INDEX_MAGIC),
        ):
            if not path.exists() or path.stat().st_size == 0:
                path.write_bytes(magic)
            else:
                with open(path, "rb") as fh:
                    if fh.read(len(magic)) != magic:
                        raise CorruptionError(f"{path.name}: bad magic header")

        self._rec_offsets = array("Q")
        self._unique_ids = array("I")
        self._index = None
        self._objects: dict[bytes, int] = {}
        self._stats = dict(
            unique_base_bits=0, dedup_record_bits=0, enc_local_bits=0, tag_bits=0,
            n_f=0, original_bits=0, unique_records=0, dedup_records=0,
        )
        self._recover()
        self._bases_fd = os.open(self._bases_path, os.O_RDWR | os.O_APPEND)
        self._objects_fd = os.open(self._objects_path, os.O_RDWR | os.O_APPEND)
        self._index_fd = os.open(self._index_path, os.O_RDWR | os.O_APPEND)

    # configuration --------------------------------------------------------------

    @property
    def n_base(self) -> int | None:
        return self.config.get("n_base")

    @property
    def q(self) -> int | None:
        return self.config.get("symbol_bits")

    @property
    def mode(self) -> str:
        return self.config["mode"]

    @property
    def t_max(self) -> int:
        return self.config["t_max"]

    @property
    def pointer_bits(self) -> int:
        return self.config["pointer_bits"]

    def _write_config(self) -> None:
        tmp = self.dir / "store.json.tmp"
        tmp.write_text(json.dumps(self.config, indent=2, sort_keys=True))
        os.replace(tmp, self.dir / "store.json")

    def _configure(self, n_base: int, q: int) -> None:
        if self.n_base is None:
            symbol_dtype(q)
            if n_base > 0xFFFF:
                raise ParameterError("bases longer than 65535 symbols are not supported")
            self.config.update(n_base=n_base, symbol_bits=q)
            self._write_config()
        elif (self.n_base, self.q) != (n_base, q):
            raise LengthMismatchError(
                f"store holds bases of {self.n_base} x {self.q}-bit symbols, got {n_base} x {q}-bit"
            )

    def _ensure_index(self) -> None:
        if self._index is None and self.n_base is not None:
            nblocks = 2 * self.t_max + 1
            if nblocks > self.n_base:
                nblocks = 1
            self._index = impl.BaseIndex(max(self.n_base, 1), nblocks)

    @property
    def _exhaustive(self) -> bool:
        # too few symbols for the pigeonhole blocks: compare against everything
        return self.linear_scan or (self._index is not None and self._index.nblocks < 2 * self.t_max + 1)

    # recovery -----------------------------------------------------------------

    def _recover(self) -> None:
        self._ensure_index()
        data = self._bases_path.read_bytes()
        pos = len(BASES_MAGIC)
        n, q = self.n_base, self.q
        while pos + 4 <= len(data):
            (length,) = _U32.unpack_from(data, pos)
            if pos + 4 + length > len(data):
                break
            body = data[pos + 4 : pos + 4 + length]
            rid = len(self._rec_offsets)
            self._rec_offsets.append(pos)
            kind = body[0] if body else None
            if kind == TYPE_UNIQUE and n is not None and len(body) == 5 + (n * q + 7) // 8:
                arr = unpack_symbols(body[1:-4], q, n)
                self._index.add(arr, rid)
                self._unique_ids.append(rid)
                self._stats["unique_base_bits"] += n * q
                self._stats["unique_records"] += 1
            else:
                try:
                    rec = decode_record(body, n or 0, q or 8, verify=False)
                    cost = record_cost_bits(rec, n, q, self.pointer_bits)
                except CorruptionError:
                    cost = self.pointer_bits
                self._stats["dedup_record_bits"] += cost
                self._stats["dedup_records"] += 1
            pos += 4 + length
        if pos != len(data):
            log.warning("truncating %d trailing bytes of %s", len(data) - pos, self._bases_path.name)
            os.truncate(self._bases_path, pos)
        del data

        objects_size = self._objects_path.stat().st_size
        index = self._index_path.read_bytes()
        pos = len(INDEX_MAGIC)
        good = pos
        with open(self._objects_path, "rb") as objs:
            while pos < len(index):
                tlen = index[pos]
                end = pos + 1 + tlen + 8
                if end > len(index):
                    break
                tag = bytes(index[pos + 1 : pos + 1 + tlen])
                (offset,) = _U64.unpack_from(index, pos + 1 + tlen)
                pos = good = end
                if offset + 4 > objects_size:
                    log.warning("index entry points past the end of objects.log")
                    continue
                self._objects[tag] = offset
                try:
                    manifest, _, _, enc = _decode_object(_pread_frame(objs.fileno(), offset, "object entry"), verify=False)
                except CorruptionError:
                    log.warning("unreadable object entry at offset %d", offset)
                    continue
                self._count_object(manifest, enc)
        if good != len(index):
            os.truncate(self._index_path, good)

    def _count_object(self, manifest: FileManifest, enc_locals) -> None:
        self._stats["n_f"] += 1
        self._stats["tag_bits"] += 8 * len(manifest.file_tag)
        self._stats["original_bits"] += 8 * manifest.original_byte_length
        self._stats["enc_local_bits"] += sum(ed.stored_size_bits for ed in enc_locals)

    # raw record access -----------------------------------------------------------

    def _read_record_bytes(self, rid: int) -> bytes:
        if not 0 <= rid < len(self._rec_offsets):
            raise CorruptionError(f"dangling record id {rid}")
        off = self._rec_offsets[rid]
        return _pread_frame(self._bases_fd, off, "record")

    def get_record(self, rid: int) -> CloudRecord:
        with self._lock:
            return decode_record(self._read_record_bytes(rid), self.n_base, self.q, verify=self.verify_checksums)

    def _unique_content(self, rid: int) -> np.ndarray:
        arr = self._cache.get(rid)
        if arr is not None:
            self._cache.move_to_end(rid)
            return arr
        arr = self._unflushed.get(rid)
        if arr is not None:
            return arr
        rec = decode_record(self._read_record_bytes(rid), self.n_base, self.q, verify=self.verify_checksums)
        if not isinstance(rec, Unique):
            raise CorruptionError(f"record {rid} is referenced as a base but is not unique")
        arr = rec.base.symbols
        self._cache[rid] = arr
        if len(self._cache) > 4096:
            self._cache.popitem(last=False)
        return arr

    # ingestion ---------------------------------------------------------------------

    def _match(self, arr: np.ndarray) -> CloudRecord:
        for cid in self._index.exact_candidates(arr):
            if np.array_equal(self._unique_content(cid), arr):
                return Deduped(cid, ())
        if self.mode != "gd":
            return Unique(SymbolString.wrap(arr, self.q))
        cands = self._unique_ids if self._exhaustive else self._index.similar_candidates(arr)
        best = None
        for cid in cands:
            src = self._unique_content(cid)
            bound = self.t_max if best is None else best[0] - 1
            d, path = swap_change_alignment(src, arr, cutoff=bound)
            if d <= bound:
                best = (d, cid, path, src)
                if d <= 1:
                    break
        if best is not None:
            _, cid, path, src = best
            delta = delta_from_alignment(src, arr, path)
            if delta_cost_bits(delta, self.n_base, self.q) + self.pointer_bits < self.n_base * self.q:
                return Deduped(cid, delta)
        return Unique(SymbolString.wrap(arr, self.q))

    def _ingest_locked(self, arr: np.ndarray, pending: list[bytes], pending_size: list[int]) -> tuple[int, CloudRecord]:
        rec = self._match(arr)
        raw = encode_record(rec, self.q)
        rid = len(self._rec_offsets)
        self._rec_offsets.append(pending_size[0])
        pending.append(raw)
        pending_size[0] += len(raw)
        if isinstance(rec, Unique):
            self._index.add(arr, rid)
            self._unique_ids.append(rid)
            self._unflushed[rid] = arr
            self._cache[rid] = arr
            if len(self._cache) > 4096:
                self._cache.popitem(last=False)
            self._stats["unique_base_bits"] += self.n_base * self.q
            self._stats["unique_records"] += 1
        else:
            self._stats["dedup_record_bits"] += record_cost_bits(rec, self.n_base, self.q, self.pointer_bits)
            self._stats["dedup_records"] += 1
        return rid, rec

    def _flush_records(self, pending: list[bytes]) -> None:
        if pending:
            _write_all(self._bases_fd, b"".join(pending))
            if self.fsync:
                os.fsync(self._bases_fd)
        self._unflushed.clear()

    def _prepare(self, base) -> np.ndarray:
        if not isinstance(base, SymbolString):
            raise TypeError("base must be a SymbolString")
        self._configure(len(base), base.q)
        self._ensure_index()
        arr = np.ascontiguousarray(base.symbols)
        arr.setflags(write=False)
        return arr

    def ingest_base(self, base: SymbolString) -> tuple[int, CloudRecord]:
        """Store one base and return its record id and record."""
        with self._lock:
            arr = self._prepare(base)
            pending: list[bytes] = []
            size = [os.fstat(self._bases_fd).st_size]
            try:
                rid, rec = self._ingest_locked(arr, pending, size)
            finally:
                self._flush_records(pending)
            return rid, rec

    def materialize(self, record: CloudRecord) -> SymbolString:
        with self._lock:
            if isinstance(record, Unique):
                return record.base
            src = self._unique_content(record.base_id)
            out = apply_delta(src, record.delta)
            out.setflags(write=False)
            return SymbolString.wrap(out, self.q)

    # objects -----------------------------------------------------------------------

    def put_object(self, tag: bytes, manifest: FileManifest, pieces, enc_locals) -> bool:
        """Store a file's pieces and encrypted deviations under ``tag``.

        Returns True when the object was created, False when the identical
        object was already present.
        """
        q = manifest.params.symbol_bits
        if len(pieces) != manifest.chunk_count:
            raise LengthMismatchError(f"expected {manifest.chunk_count} pieces, got {len(pieces)}")
        dt = symbol_dtype(q)
        matrix = np.empty((len(pieces), manifest.n_base), dtype=dt)
        for i, piece in enumerate(pieces):
            base = piece.base if isinstance(piece, OutsourcePiece) else piece
            if len(base) != manifest.n_base or base.q != q:
                raise LengthMismatchError(f"piece {i} does not have {manifest.n_base} {q}-bit symbols")
            matrix[i] = base.symbols
        return self.put_payload(tag, manifest, matrix, enc_locals)

    def put_payload(self, tag: bytes, manifest: FileManifest, matrix: np.ndarray, enc_locals) -> bool:
        tag = bytes(tag)
        if tag != manifest.file_tag:
            raise ParameterError("tag does not match the manifest's file tag")
        q, n_base = manifest.params.symbol_bits, manifest.n_base
        if matrix.shape != (manifest.chunk_count, n_base):
            raise LengthMismatchError(f"piece matrix has shape {matrix.shape}, expected {(manifest.chunk_count, n_base)}")
        if len(enc_locals) != manifest.chunk_count:
            raise LengthMismatchError(f"expected {manifest.chunk_count} encrypted deviations, got {len(enc_locals)}")
        matrix = np.ascontiguousarray(matrix, dtype=symbol_dtype(q))
        if matrix.size and int(matrix.max()) >= (1 << q):
            raise ParameterError("symbol value out of range")
        digest = content_digest(manifest, pack_pieces(matrix, q), enc_locals)
        with self._lock:
            self._check_open()
            existing = self._objects.get(tag)
            if existing is not None:
                _, old_digest, _, _ = self._read_object(existing)
                if old_digest == digest:
                    return False
                raise ConflictError("tag already stored with different content")
            if manifest.chunk_count:
                self._configure(n_base, q)
                self._ensure_index()
            pending: list[bytes] = []
            size = [os.fstat(self._bases_fd).st_size]
            ids = []
            try:
                for row in matrix:
                    row.setflags(write=False)
                    rid, _ = self._ingest_locked(row, pending, size)
                    ids.append(rid)
            finally:
                self._flush_records(pending)
            entry = _encode_object(manifest, digest, ids, enc_locals)
            offset = os.fstat(self._objects_fd).st_size
            _write_all(self._objects_fd, entry)
            if self.fsync:
                os.fsync(self._objects_fd)
            _write_all(self._index_fd, bytes([len(tag)]) + tag + _U64.pack(offset))
            if self.fsync:
                os.fsync(self._index_fd)
            self._objects[tag] = offset
            self._count_object(manifest, enc_locals)
            return True

    def _read_object(self, offset: int):
        return _decode_object(_pread_frame(self._objects_fd, offset, "object entry"), verify=self.verify_checksums)

    def get_payload(self, tag: bytes) -> tuple[FileManifest, np.ndarray, list[EncryptedDeviation]]:
        """Like :meth:`get_object` but with pieces as one (chunks, n_base) matrix."""
        tag = bytes(tag)
        with self._lock:
            self._check_open()
            offset = self._objects.get(tag)
            if offset is None:
                raise NotFoundError("no object stored under this tag")
            manifest, _, ids, enc = self._read_object(offset)
            if manifest.file_tag != tag:
                raise CorruptionError("stored object carries a different tag")
            n_base, q = manifest.n_base, manifest.params.symbol_bits
            matrix = np.empty((len(ids), n_base), dtype=symbol_dtype(q))
            if ids:
                if (self.n_base, self.q) != (n_base, q):
                    raise CorruptionError("object geometry does not match the store")
                for i, rid in enumerate(ids):
                    rec = decode_record(self._read_record_bytes(rid), n_base, q, verify=self.verify_checksums)
                    if isinstance(rec, Unique):
                        matrix[i] = rec.base.symbols
                    else:
                        matrix[i] = apply_delta(self._unique_content(rec.base_id), rec.delta)
            return manifest, matrix, enc

    def get_object(self, tag: bytes) -> tuple[FileManifest, list[OutsourcePiece], list[EncryptedDeviation]]:
        manifest, matrix, enc = self.get_payload(tag)
        q = manifest.params.symbol_bits
        pieces = []
        for row in matrix:
            row.setflags(write=False)
            pieces.append(OutsourcePiece(SymbolString.wrap(row, q)))
        return manifest, pieces, enc

    def object_records(self, tag: bytes) -> list[int]:
        """Record ids backing an object, in chunk order."""
        with self._lock:
            offset = self._objects.get(bytes(tag))
            if offset is None:
                raise NotFoundError("no object stored under this tag")
            return list(self._read_object(offset)[2])

    def tags(self) -> list[bytes]:
        with self._lock:
            return list(self._objects)

    def stats(self) -> StoreStats:
        with self._lock:
            return StoreStats(**self._stats)

    # lifecycle ---------------------------------------------------------------------

    def _check_open(self) -> None:
        if self._closed:
            raise ParameterError("store is closed")

    def close(self) -> None:
        with self._lock:
            if not self._closed:
                for fd in (self._bases_fd, self._objects_fd, self._index_fd):
                    os.close(fd)
                self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def recount_stats(directory) -> StoreStats:
    """Recompute :class:`StoreStats` by walking the persisted files from scratch."""
    d = Path(directory)
    cfg = json.loads((d / "store.json").read_text())
    n_base, q, ptr = cfg["n_base"], cfg["symbol_bits"], cfg["pointer_bits"]
    pos_bits = (n_base - 1).bit_length() if n_base and n_base > 1 else 0
    unique_bits = dedup_bits = unique_n = dedup_n = 0
    data = (d / "bases.log").read_bytes()
    if data[: len(BASES_MAGIC)] != BASES_MAGIC:
        raise CorruptionError("bases.log: bad magic header")
    pos = len(BASES_MAGIC)
    while pos + 4 <= len(data):
        (length,) = struct.unpack_from("<I", data, pos)
        body = data[pos + 4 : pos + 4 + length]
        if len(body) < length:
            break
        if body[0] == TYPE_UNIQUE:
            unique_bits += n_base * q
            unique_n += 1
        else:
            (count,) = struct.unpack_from("<H", body, 5)
            p, bits = 7, ptr
            for _ in range(count):
                if body[p] == OP_CHANGE:
                    bits += 1 + pos_bits + q
                    p += 7
                else:
                    bits += 1 + pos_bits
                    p += 3
            dedup_bits += bits
            dedup_n += 1
        pos += 4 + length

    index = (d / "index.bin").read_bytes()
    objects = (d / "objects.log").read_bytes()
    enc_bits = tag_bits = n_f = original = 0
    pos = len(INDEX_MAGIC)
    while pos < len(index):
        tlen = index[pos]
        if pos + 1 + tlen + 8 > len(index):
            break
        (offset,) = struct.unpack_from("<Q", index, pos + 1 + tlen)
        pos += 1 + tlen + 8
        p = offset + 4
        etlen = objects[p]
        p += 1 + etlen
        count, length = struct.unpack_from("<IQ", objects, p)
        p += struct.calcsize("<IQIBIB") + 32 + 4 + 4 * count
        for _ in range(3 * count):
            (flen,) = struct.unpack_from(">H", objects, p)
            enc_bits += 8 * flen
            p += 2 + flen
        n_f += 1
        tag_bits += 8 * etlen
        original += 8 * length
    return StoreStats(
        unique_base_bits=unique_bits,
        dedup_record_bits=dedup_bits,
        enc_local_bits=enc_bits,
        tag_bits=tag_bits,
        n_f=n_f,
        original_bits=original,
        unique_records=unique_n,
        dedup_records=dedup_n,
    )
