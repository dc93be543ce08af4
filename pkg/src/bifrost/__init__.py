"""Dual deduplication for file sharing through an untrusted cloud.

The client deletes a few PRNG-chosen symbols from every chunk, keeps them
(encrypted) as the deviation and uploads the rest; the cloud deduplicates
those bases against similar ones. A receiver holding the share token
rebuilds the file and checks it against its MAC tag.
"""

from .bench import CorpusSpec, SweepConfig, compression_ratio, generate_corpus, run_sweep, transmission_size
from .core import ChunkingParams, FileManifest, SymbolString, assemble_file, chunk_file
from .crypto import (
    EncryptedDeviation,
    FileTag,
    KeyMaterial,
    decrypt,
    encrypt,
    mac_tag,
    mac_verify,
    prng_stream,
    uniform_int,
)
from .distance import damerau_levenshtein, hamming, swap_change_distance
from .errors import (
    BifrostError,
    ConflictError,
    CorruptionError,
    DecryptionFailure,
    IntegrityFailure,
    LengthMismatchError,
    NotFoundError,
    ParameterError,
)
from .kernels import BACKEND
from .protocol import CloudClient, client_download, client_upload, serve, start_server
from .sharing import ShareToken, receiver_fetch, sender_store
from .store import AdjSwap, ChangeValue, Deduped, GDStore, StoreStats, Unique, delta_cost_bits, recount_stats
from .transform import DeletionDeviation, OutsourcePiece, delete_transform, derive_positions, reinsert

__version__ = "0.1.0"

__all__ = [
    "AdjSwap", "BACKEND", "BifrostError", "ChangeValue", "ChunkingParams", "CloudClient",
    "ConflictError", "CorpusSpec", "CorruptionError", "DecryptionFailure", "Deduped",
    "DeletionDeviation", "EncryptedDeviation", "FileManifest", "FileTag", "GDStore",
    "IntegrityFailure", "KeyMaterial", "LengthMismatchError", "NotFoundError", "OutsourcePiece",
    "ParameterError", "ShareToken", "StoreStats", "SweepConfig", "SymbolString", "Unique",
    "assemble_file", "chunk_file", "client_download", "client_upload", "compression_ratio",
    "damerau_levenshtein", "decrypt", "delete_transform", "delta_cost_bits", "derive_positions",
    "encrypt", "generate_corpus", "hamming", "mac_tag", "mac_verify", "prng_stream",
    "receiver_fetch", "recount_stats", "reinsert", "run_sweep", "sender_store", "serve",
    "start_server", "swap_change_distance", "transmission_size", "uniform_int",
]
