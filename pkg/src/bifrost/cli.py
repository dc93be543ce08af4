"""``bifrost`` command line: serve, put, get, sweep, stats."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .bench import SweepConfig, run_sweep
from .core import ChunkingParams
from .crypto import KeyMaterial
from .errors import BifrostError
from .protocol import CloudClient, default_store_dir, serve
from .sharing import ShareToken, receiver_fetch, sender_store
from .store import GDStore

DEFAULT_SERVER = "127.0.0.1:7878"


def _server(args) -> str:
    return args.server or os.environ.get("BIFROST_SERVER", DEFAULT_SERVER)


def cmd_serve(args) -> int:
    store = GDStore(args.store_dir or default_store_dir(), mode=args.mode, t_max=args.t_max, fsync=args.fsync)
    with store:
        serve(args.listen, store)
    return 0


def cmd_put(args) -> int:
    data = Path(args.file).read_bytes()
    params = ChunkingParams(args.chunk_bits, args.symbol_bits)
    keys = KeyMaterial.generate(args.mac_bits, args.enc_bits)
    token = sender_store(data, params, args.ndel, keys, _server(args), pad_block_bits=128 if args.pad else 0)
    token.save(args.token_out)
    print(f"stored {len(data)} bytes; token ({token.bit_size} bits) written to {args.token_out}")
    return 0


def cmd_get(args) -> int:
    token = ShareToken.load(args.token)
    data = receiver_fetch(token, _server(args))
    Path(args.out).write_bytes(data)
    print(f"recovered {len(data)} bytes into {args.out}; integrity verified")
    return 0


def cmd_sweep(args) -> int:
    config = SweepConfig.from_toml(args.config) if args.config else SweepConfig()
    if args.workers:
        config.workers = args.workers
    run_sweep(config, args.out)
    print(f"wrote {len(config.cells())} rows to {args.out}")
    return 0


def cmd_stats(args) -> int:
    with CloudClient(_server(args)) as client:
        stats = client.stats()
    print(json.dumps({**asdict(stats), "c_size": stats.c_size}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bifrost", description="Dual-deduplicated file sharing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the storage service")
    p.add_argument("--listen", default=DEFAULT_SERVER, help="host:port (default %(default)s)")
    p.add_argument("--store-dir", help="store directory (default $BIFROST_STORE_DIR)")
    p.add_argument("--mode", choices=["gd", "exact"], default="gd")
    p.add_argument("--t-max", type=int, default=8, help="largest swap/change distance matched")
    p.add_argument("--fsync", action="store_true", help="fsync after every write")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("put", help="upload a file and write its share token")
    p.add_argument("file")
    p.add_argument("--ndel", type=int, default=12, help="symbols deleted per chunk")
    p.add_argument("--server", help=f"host:port (default $BIFROST_SERVER or {DEFAULT_SERVER})")
    p.add_argument("--token-out", required=True)
    p.add_argument("--chunk-bits", type=int, default=2048)
    p.add_argument("--symbol-bits", type=int, default=8)
    p.add_argument("--mac-bits", type=int, choices=[256, 512], default=256)
    p.add_argument("--enc-bits", type=int, choices=[128, 256], default=128)
    p.add_argument("--pad", action="store_true", help="pad deviations to 128-bit blocks")
    p.set_defaults(func=cmd_put)

    p = sub.add_parser("get", help="download and verify a file from a share token")
    p.add_argument("--token", required=True)
    p.add_argument("--server")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_get)

    p = sub.add_parser("sweep", help="run a parameter sweep and write CSV")
    p.add_argument("--config", help="TOML file with sweep settings")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, help="parallel cells (overrides the config)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="print store statistics")
    p.add_argument("--server")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BifrostError, OSError) as exc:
        print(f"bifrost: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
