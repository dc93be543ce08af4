"""Binary wire protocol between clients and the storage service.

Frame layout, all integers little-endian::

    [u32 frame_len][u8 version = 1][u8 kind][body]

``frame_len`` counts the version and kind bytes plus the body. Bodies:

    UPLOAD     [u8 tag_len][tag][manifest][pieces][enc_locals]
    DOWNLOAD   [u8 tag_len][tag]
    UPLOAD_OK  [u8 created]
    OBJECT     [manifest][pieces][enc_locals]
    ERROR      [u16 code][utf-8 message]
    STATS      empty
    STATS_OK   eight u64 counters, in StoreStats field order

``pieces`` is one row per chunk, each ``ceil(n_base * q / 8)`` bytes of
big-endian packed symbols; ``enc_locals`` are ``chunk_count`` encrypted
deviations, each three ``[u16 len][bytes]`` fields (nonce, ciphertext, tag)
whose length prefixes are big-endian.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .core import FileManifest, SymbolString, symbol_dtype
from .crypto import EncryptedDeviation
from .errors import (
    ConflictError,
    CorruptionError,
    LengthMismatchError,
    NotFoundError,
    ParameterError,
    ProtocolError,
    RemoteError,
)
from .store import GDStore, StoreStats, pack_pieces, piece_nbytes, unpack_pieces
from .transform import OutsourcePiece

log = logging.getLogger(__name__)

VERSION = 1
MAX_FRAME = 1 << 31
DEFAULT_PORT = 7878

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_STATS = struct.Struct("<8Q")
_STATS_FIELDS = [f.name for f in dataclasses.fields(StoreStats)]


class Kind(IntEnum):
    UPLOAD = 1
    DOWNLOAD = 2
    UPLOAD_OK = 3
    OBJECT = 4
    ERROR = 5
    STATS = 6
    STATS_OK = 7


class ErrorCode(IntEnum):
    MALFORMED = 1
    NOT_FOUND = 2
    CONFLICT = 3
    CORRUPT = 4
    INVALID = 5
    INTERNAL = 6


_REMOTE_EXC = {
    ErrorCode.NOT_FOUND: NotFoundError,
    ErrorCode.CONFLICT: ConflictError,
    ErrorCode.CORRUPT: CorruptionError,
    ErrorCode.INVALID: ParameterError,
    ErrorCode.MALFORMED: ProtocolError,
}


@dataclass(frozen=True)
class WireMessage:
    kind: Kind
    body: bytes = b""

    def encode(self) -> bytes:
        return _U32.pack(2 + len(self.body)) + bytes([VERSION, int(self.kind)]) + self.body

    @classmethod
    def decode(cls, frame: bytes) -> WireMessage:
        """Decode one complete frame, length prefix included."""
        if len(frame) < 6:
            raise ProtocolError("frame shorter than its header")
        (length,) = _U32.unpack_from(frame)
        if length != len(frame) - 4:
            raise ProtocolError(f"frame length prefix {length} does not match {len(frame) - 4} bytes")
        return cls._from_parts(frame[4], frame[5], bytes(frame[6:]))

    @classmethod
    def _from_parts(cls, version: int, kind: int, body: bytes) -> WireMessage:
        if version != VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")
        try:
            return cls(Kind(kind), body)
        except ValueError:
            raise ProtocolError(f"unknown message kind {kind}") from None


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:])
        if k == 0:
            if got == 0:
                return None
            raise ProtocolError("connection closed mid-frame")
        got += k
    return bytes(buf)


def read_message(sock: socket.socket) -> WireMessage | None:
    """Next message from the stream, or None on a clean end of stream."""
    head = _recv_exact(sock, 6)
    if head is None:
        return None
    (length,) = _U32.unpack_from(head)
    if length < 2 or length > MAX_FRAME:
        raise ProtocolError(f"bad frame length {length}")
    body = _recv_exact(sock, length - 2) if length > 2 else b""
    if body is None:
        raise ProtocolError("connection closed mid-frame")
    return WireMessage._from_parts(head[4], head[5], body)


def send_message(sock: socket.socket, msg: WireMessage) -> None:
    sock.sendall(msg.encode())


# --- body codecs ---------------------------------------------------------------

def _tag_bytes(tag: bytes) -> bytes:
    if len(tag) not in (32, 64):
        raise ParameterError("tags are 32 or 64 bytes")
    return bytes([len(tag)]) + bytes(tag)


def _read_tag(body: bytes, pos: int = 0) -> tuple[bytes, int]:
    if pos >= len(body):
        raise ProtocolError("missing tag")
    n = body[pos]
    tag = body[pos + 1 : pos + 1 + n]
    if n not in (32, 64) or len(tag) != n:
        raise ProtocolError("tags are 32 or 64 bytes")
    return bytes(tag), pos + 1 + n


def encode_payload(manifest: FileManifest, matrix: np.ndarray, enc_locals) -> bytes:
    q = manifest.params.symbol_bits
    if matrix.shape != (manifest.chunk_count, manifest.n_base):
        raise LengthMismatchError("piece matrix does not match the manifest")
    if len(enc_locals) != manifest.chunk_count:
        raise LengthMismatchError("one encrypted deviation per chunk required")
    return b"".join([manifest.to_bytes(), pack_pieces(matrix, q), *(ed.to_bytes() for ed in enc_locals)])


def decode_payload(body: bytes, pos: int = 0) -> tuple[FileManifest, np.ndarray, list[EncryptedDeviation]]:
    try:
        manifest, pos = FileManifest.from_bytes(body, pos)
    except (LengthMismatchError, ParameterError) as exc:
        raise ProtocolError(f"bad manifest: {exc}") from exc
    q, n_base, rows = manifest.params.symbol_bits, manifest.n_base, manifest.chunk_count
    size = rows * piece_nbytes(n_base, q)
    if pos + size > len(body):
        raise ProtocolError("truncated piece data")
    matrix = unpack_pieces(body[pos : pos + size], q, rows, n_base)
    pos += size
    enc = []
    try:
        for _ in range(rows):
            ed, pos = EncryptedDeviation.from_bytes(body, pos)
            enc.append(ed)
    except LengthMismatchError as exc:
        raise ProtocolError(str(exc)) from exc
    if pos != len(body):
        raise ProtocolError("trailing bytes after payload")
    if matrix.size and int(matrix.max()) >= (1 << q):
        raise ProtocolError("symbol value out of range")
    return manifest, matrix, enc


def upload_message(tag: bytes, manifest: FileManifest, matrix: np.ndarray, enc_locals) -> WireMessage:
    return WireMessage(Kind.UPLOAD, _tag_bytes(tag) + encode_payload(manifest, matrix, enc_locals))


def parse_upload(body: bytes):
    tag, pos = _read_tag(body)
    return (tag, *decode_payload(body, pos))


def download_message(tag: bytes) -> WireMessage:
    return WireMessage(Kind.DOWNLOAD, _tag_bytes(tag))


def parse_download(body: bytes) -> bytes:
    tag, pos = _read_tag(body)
    if pos != len(body):
        raise ProtocolError("trailing bytes after tag")
    return tag


def error_message(code: ErrorCode, text: str) -> WireMessage:
    return WireMessage(Kind.ERROR, _U16.pack(int(code)) + text.encode("utf-8", "replace"))


def parse_error(body: bytes) -> tuple[int, str]:
    if len(body) < 2:
        raise ProtocolError("short error body")
    return _U16.unpack_from(body)[0], body[2:].decode("utf-8", "replace")


def stats_message(stats: StoreStats) -> WireMessage:
    return WireMessage(Kind.STATS_OK, _STATS.pack(*(getattr(stats, f) for f in _STATS_FIELDS)))


def parse_stats(body: bytes) -> StoreStats:
    if len(body) != _STATS.size:
        raise ProtocolError("bad stats body")
    return StoreStats(**dict(zip(_STATS_FIELDS, _STATS.unpack(body))))


# --- service -------------------------------------------------------------------

def _error_code(exc: Exception) -> ErrorCode:
    if isinstance(exc, ProtocolError):
        return ErrorCode.MALFORMED
    if isinstance(exc, NotFoundError):
        return ErrorCode.NOT_FOUND
    if isinstance(exc, ConflictError):
        return ErrorCode.CONFLICT
    if isinstance(exc, CorruptionError):
        return ErrorCode.CORRUPT
    if isinstance(exc, (ParameterError, LengthMismatchError)):
        return ErrorCode.INVALID
    return ErrorCode.INTERNAL


def handle_request(store: GDStore, msg: WireMessage) -> WireMessage:
    """Run one request against ``store`` and build the reply."""
    if msg.kind == Kind.UPLOAD:
        tag, manifest, matrix, enc = parse_upload(msg.body)
        created = store.put_payload(tag, manifest, matrix, enc)
        return WireMessage(Kind.UPLOAD_OK, bytes([created]))
    if msg.kind == Kind.DOWNLOAD:
        manifest, matrix, enc = store.get_payload(parse_download(msg.body))
        return WireMessage(Kind.OBJECT, encode_payload(manifest, matrix, enc))
    if msg.kind == Kind.STATS:
        if msg.body:
            raise ProtocolError("stats request carries no body")
        return stats_message(store.stats())
    raise ProtocolError(f"{msg.kind.name} is not a request")


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        store = self.server.store
        while True:
            try:
                msg = read_message(sock)
            except ProtocolError as exc:
                self._reply(error_message(ErrorCode.MALFORMED, str(exc)))
                return
            except OSError as exc:
                log.info("connection from %s dropped: %s", self.client_address, exc)
                return
            if msg is None:
                return
            try:
                reply = handle_request(store, msg)
            except Exception as exc:  # every failure becomes an ERROR frame
                code = _error_code(exc)
                if code == ErrorCode.INTERNAL:
                    log.exception("request failed")
                reply = error_message(code, str(exc) or type(exc).__name__)
                self._reply(reply)
                if code == ErrorCode.MALFORMED:
                    return
                continue
            if not self._reply(reply):
                return

    def _reply(self, msg: WireMessage) -> bool:
        try:
            send_message(self.request, msg)
            return True
        except OSError as exc:
            log.info("reply to %s failed: %s", self.client_address, exc)
            return False


class StorageServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, store: GDStore):
        self.store = store
        super().__init__(address, _Handler)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return host, port


def parse_address(text) -> tuple[str, int]:
    """``"host:port"`` (or an existing tuple) -> ``(host, port)``."""
    if isinstance(text, tuple):
        return text[0], int(text[1])
    host, sep, port = str(text).rpartition(":")
    if not sep:
        return str(text), DEFAULT_PORT
    return host.strip("[]") or "127.0.0.1", int(port)


def serve(listen_address, store: GDStore) -> None:
    """Serve ``store`` on ``listen_address`` until interrupted."""
    with StorageServer(parse_address(listen_address), store) as server:
        log.info("serving on %s:%d", *server.address)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass


def start_server(store: GDStore, listen_address=("127.0.0.1", 0)) -> StorageServer:
    """Start a server on a background thread; stop it with ``shutdown()``."""
    server = StorageServer(parse_address(listen_address), store)
    threading.Thread(target=server.serve_forever, name="bifrost-server", daemon=True).start()
    return server


def default_store_dir() -> str:
    path = os.environ.get("BIFROST_STORE_DIR")
    if not path:
        raise ParameterError("no store directory: pass --store-dir or set BIFROST_STORE_DIR")
    return path


# --- client --------------------------------------------------------------------

class CloudClient:
    """Blocking single-connection client. Usable as a context manager."""

    def __init__(self, address, timeout: float | None = 60.0):
        self.address = parse_address(address)
        self._sock = socket.create_connection(self.address, timeout=timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _call(self, msg: WireMessage, expect: Kind) -> WireMessage:
        send_message(self._sock, msg)
        reply = read_message(self._sock)
        if reply is None:
            raise ProtocolError("server closed the connection")
        if reply.kind == Kind.ERROR:
            code, text = parse_error(reply.body)
            try:
                exc = _REMOTE_EXC.get(ErrorCode(code), RemoteError)
            except ValueError:
                exc = RemoteError
            raise exc(text)
        if reply.kind != expect:
            raise ProtocolError(f"expected {expect.name}, got {reply.kind.name}")
        return reply

    def put_payload(self, tag: bytes, manifest: FileManifest, matrix: np.ndarray, enc_locals) -> bool:
        reply = self._call(upload_message(tag, manifest, matrix, enc_locals), Kind.UPLOAD_OK)
        if len(reply.body) != 1:
            raise ProtocolError("bad upload acknowledgment")
        return bool(reply.body[0])

    def get_payload(self, tag: bytes):
        return decode_payload(self._call(download_message(tag), Kind.OBJECT).body)

    def put_object(self, tag: bytes, manifest: FileManifest, pieces, enc_locals) -> bool:
        rows = [p.base.symbols if isinstance(p, OutsourcePiece) else p.symbols for p in pieces]
        matrix = np.empty((len(rows), manifest.n_base), dtype=symbol_dtype(manifest.params.symbol_bits))
        for i, r in enumerate(rows):
            if len(r) != manifest.n_base:
                raise LengthMismatchError(f"piece {i} does not have {manifest.n_base} symbols")
            matrix[i] = r
        return self.put_payload(tag, manifest, matrix, enc_locals)

    def get_object(self, tag: bytes):
        manifest, matrix, enc = self.get_payload(tag)
        q = manifest.params.symbol_bits
        return manifest, [OutsourcePiece(SymbolString.wrap(row, q)) for row in matrix], enc

    def stats(self) -> StoreStats:
        return parse_stats(self._call(WireMessage(Kind.STATS), Kind.STATS_OK).body)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def client_upload(address, tag: bytes, manifest: FileManifest, pieces, enc_locals) -> bool:
    with CloudClient(address) as client:
        return client.put_object(tag, manifest, pieces, enc_locals)


def client_download(address, tag: bytes):
    with CloudClient(address) as client:
        return client.get_object(tag)


__all__ = [
    "CloudClient",
    "ErrorCode",
    "Kind",
    "StorageServer",
    "WireMessage",
    "client_download",
    "client_upload",
    "handle_request",
    "parse_address",
    "serve",
    "start_server",
]
