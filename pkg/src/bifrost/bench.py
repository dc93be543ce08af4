"""Compression and transmission metrics, a synthetic corpus and parameter sweeps."""

from __future__ import annotations

import csv
import io
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

from .core import ChunkingParams
from .crypto import KeyMaterial, PrngStream, padded_size_bits
from .errors import ParameterError
from .sharing import SEED_BYTES, receiver_fetch, sender_store
from .store import GDStore, StoreStats

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

CSV_COLUMNS = (
    "n_del", "chunk_bits", "mac_bits", "enc_bits", "padding", "chi", "tau", "s_dev",
    "mode", "s_base", "enc_payload_bits", "c_size", "tag_bits", "db_bits",
    "unique_bases", "dedup_records", "chi_tag100",
)


def compression_ratio(stats: StoreStats, db_bits: int, fid_size: int | None = None) -> Fraction:
    """``(C_size + n_f * fid_size) / db_bits`` as an exact fraction.

    Without ``fid_size`` the identifiers actually stored are charged, which is
    the same thing whenever every file uses one tag width.
    """
    if db_bits <= 0:
        raise ParameterError("database size must be positive")
    ids = stats.tag_bits if fid_size is None else stats.n_f * fid_size
    return Fraction(stats.c_size + ids, db_bits)


def transmission_size(fid_size: int, mac_key_bits: int, enc_key_bits: int) -> int:
    """Bits handed from sender to receiver: tag plus both keys."""
    return fid_size + mac_key_bits + enc_key_bits


# --- corpus ------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusSpec:
    """Clusters of files mutated from a shared random prototype.

    Each file applies ``round(mutation_rate * file_bytes)`` edits to its
    cluster prototype, each either a byte substitution or an adjacent
    transposition. All randomness comes from the ChaCha20 stream of ``seed``.
    """

    seed: int = 0
    clusters: int = 8
    files_per_cluster: int = 4
    file_bytes: int = 4096
    mutation_rate: float = 0.002

    def __post_init__(self):
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ParameterError("mutation_rate must lie in [0, 1]")
        if self.clusters < 0 or self.files_per_cluster < 0 or self.file_bytes < 0:
            raise ParameterError("corpus sizes must be non-negative")

    def describe(self) -> str:
        return " ".join(f"{k}={v}" for k, v in asdict(self).items())


def _corpus_stream(corpus: CorpusSpec) -> PrngStream:
    return PrngStream(b"bifrost/corpus\x00" + corpus.seed.to_bytes(8, "big", signed=True))


@lru_cache(maxsize=4)
def generate_corpus(corpus: CorpusSpec) -> tuple[bytes, ...]:
    """Files ordered cluster by cluster; deterministic in ``corpus``."""
    rng = _corpus_stream(corpus)
    n = corpus.file_bytes
    edits = round(corpus.mutation_rate * n)
    files = []
    for _ in range(corpus.clusters):
        proto = rng.read(n)
        for _ in range(corpus.files_per_cluster):
            buf = bytearray(proto)
            for _ in range(edits if n > 1 else 0):
                if rng.next_byte() & 1:
                    p = rng.uniform_int(n - 1)
                    buf[p], buf[p + 1] = buf[p + 1], buf[p]
                else:
                    buf[rng.uniform_int(n)] = rng.next_byte()
            files.append(bytes(buf))
    return tuple(files)


def derived_keys(key_seed: int, index: int, mac_bits: int, enc_bits: int) -> KeyMaterial:
    """Reproducible per-file keys for experiments; real senders use :meth:`KeyMaterial.generate`."""
    stream = PrngStream(b"bifrost/keys\x00" + key_seed.to_bytes(8, "big") + index.to_bytes(8, "big"))
    return KeyMaterial(stream.read(mac_bits // 8), stream.read(enc_bits // 8))


# --- sweep -------------------------------------------------------------------

def _default_n_del() -> list[int]:
    return list(range(2, 27, 2))


def _default_chunk_bits() -> list[int]:
    return [512, 800, 1024, 1280, 1600, 2048]


@dataclass
class SweepConfig:
    n_del: list[int] = field(default_factory=_default_n_del)
    chunk_bits: list[int] = field(default_factory=_default_chunk_bits)
    mac_bits: list[int] = field(default_factory=lambda: [256, 512])
    enc_bits: list[int] = field(default_factory=lambda: [128, 256])
    padding: list[bool] = field(default_factory=lambda: [False, True])
    modes: list[str] = field(default_factory=lambda: ["gd"])
    symbol_bits: int = 8
    t_max: int = 8
    pointer_bits: int = 32
    master_seed: str = "00" * 32
    key_seed: int = 0
    verify: bool = True
    workers: int = 1
    work_dir: str | None = None
    corpus: CorpusSpec = field(default_factory=CorpusSpec)

    def __post_init__(self):
        for name in ("n_del", "chunk_bits", "mac_bits", "enc_bits", "padding", "modes"):
            value = getattr(self, name)
            if isinstance(value, (int, str, bool)):
                value = [value]
            setattr(self, name, list(value))
        self.padding = [bool(p) for p in self.padding]
        if isinstance(self.corpus, dict):
            self.corpus = CorpusSpec(**self.corpus)
        bad = [m for m in self.mac_bits if m not in (256, 512)] + [e for e in self.enc_bits if e not in (128, 256)]
        if bad:
            raise ParameterError(f"unsupported key sizes {bad}")
        if any(m not in ("gd", "exact") for m in self.modes):
            raise ParameterError("modes must be 'gd' or 'exact'")
        for cb in self.chunk_bits:
            n_org = ChunkingParams(cb, self.symbol_bits).n_org
            if any(not 0 <= d < n_org for d in self.n_del):
                raise ParameterError(f"n_del values must lie in [0, {n_org}) for chunk_bits={cb}")
        try:
            self.master_bytes
        except ValueError as exc:
            raise ParameterError("master_seed must be hex") from exc
        if self.workers < 1:
            raise ParameterError("workers must be at least 1")

    @property
    def master_bytes(self) -> bytes:
        return bytes.fromhex(self.master_seed)

    @classmethod
    def from_mapping(cls, data: dict) -> SweepConfig:
        """Accepts a ``[corpus]`` table or flat ``corpus_<field>`` keys; ``n_del`` may be ``{start, stop, step}``."""
        data = dict(data)
        corpus = dict(data.pop("corpus", {}))
        for f in fields(CorpusSpec):
            if f"corpus_{f.name}" in data:
                corpus[f.name] = data.pop(f"corpus_{f.name}")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown sweep settings: {sorted(unknown)}")
        for key, value in data.items():
            if isinstance(value, dict):
                data[key] = list(range(value["start"], value["stop"] + 1, value.get("step", 1)))
        return cls(**data, corpus=CorpusSpec(**corpus))

    @classmethod
    def from_toml(cls, path) -> SweepConfig:
        with open(path, "rb") as fh:
            return cls.from_mapping(tomllib.load(fh))

    def cells(self) -> list[tuple]:
        return [
            (mode, cb, nd, mac, enc, pad)
            for mode in self.modes
            for cb in self.chunk_bits
            for nd in self.n_del
            for mac in self.mac_bits
            for enc in self.enc_bits
            for pad in self.padding
        ]


def run_cell(config: SweepConfig, cell: tuple, store_dir) -> dict:
    """One full pipeline pass over the corpus against a fresh store."""
    mode, chunk_bits, n_del, mac_bits, enc_bits, padding = cell
    params = ChunkingParams(chunk_bits, config.symbol_bits)
    files = generate_corpus(config.corpus)
    pad = 128 if padding else 0
    with GDStore(store_dir, mode=mode, t_max=config.t_max, pointer_bits=config.pointer_bits) as store:
        tokens = []
        for i, data in enumerate(files):
            keys = derived_keys(config.key_seed, i, mac_bits, enc_bits)
            tokens.append(sender_store(data, params, n_del, keys, store, pad_block_bits=pad,
                                       master_seed=config.master_bytes))
        if config.verify:
            for token, data in zip(tokens, files):
                if receiver_fetch(token, store) != data:
                    raise AssertionError("sweep reconstruction mismatch")
        stats = store.stats()
    tau = transmission_size(mac_bits, mac_bits, enc_bits)
    if any(t.bit_size != tau for t in tokens):
        raise AssertionError("measured token size differs from the transmission formula")
    db_bits = 8 * sum(len(f) for f in files)
    groups = sum(max(1, -(-params.chunk_count(len(f)) // 100)) for f in files)
    s_dev = 8 * SEED_BYTES + config.symbol_bits * n_del
    return {
        "n_del": n_del,
        "chunk_bits": chunk_bits,
        "mac_bits": mac_bits,
        "enc_bits": enc_bits,
        "padding": int(padding),
        "chi": compression_ratio(stats, db_bits) if db_bits else None,
        "tau": tau,
        "s_dev": s_dev,
        "mode": mode,
        "s_base": chunk_bits - config.symbol_bits * n_del,
        "enc_payload_bits": padded_size_bits(s_dev, pad),
        "c_size": stats.c_size,
        "tag_bits": stats.tag_bits,
        "db_bits": db_bits,
        "unique_bases": stats.unique_records,
        "dedup_records": stats.dedup_records,
        "chi_tag100": Fraction(stats.c_size + groups * mac_bits, db_bits) if db_bits else None,
    }


def _cell_dir(config: SweepConfig, index: int, tmp: str) -> Path:
    root = Path(config.work_dir) if config.work_dir else Path(tmp)
    path = root / f"cell-{index:04d}"
    if path.exists() and any(path.iterdir()):
        raise ParameterError(f"{path} is not empty")
    return path


def _run_indexed(args):
    config, index, cell, tmp = args
    return run_cell(config, cell, _cell_dir(config, index, tmp))


def _fmt(value) -> str:
    if isinstance(value, Fraction):
        return f"{float(value):.10f}"
    if value is None:
        return "nan"
    return str(value)


def run_sweep(config: SweepConfig, out=None) -> str:
    """Run every cell and return (and optionally write) the CSV table."""
    cells = config.cells()
    with tempfile.TemporaryDirectory(prefix="bifrost-sweep-") as tmp:
        jobs = [(config, i, cell, tmp) for i, cell in enumerate(cells)]
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                rows = list(pool.map(_run_indexed, jobs))
        else:
            rows = [_run_indexed(job) for job in jobs]
    buf = io.StringIO()
    buf.write(f"# corpus {config.corpus.describe()}\n")
    buf.write(
        f"# store t_max={config.t_max} pointer_bits={config.pointer_bits} "
        f"symbol_bits={config.symbol_bits} seed_bits={8 * SEED_BYTES}\n"
    )
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text)
    return text
