"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Both backends run the same inputs; their outputs are compared before timing.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from bifrost import kernels


def workloads(rng: np.random.Generator):
    """(name, callable(backend) -> result) pairs; inputs are built once."""
    keys = rng.integers(0, 256, (512, 32), dtype=np.uint8)
    chunks = rng.integers(0, 256, (2048, 256), dtype=np.uint8)
    positions = kernels.impl.derive_positions_batch(rng.integers(0, 256, (2048, 32), dtype=np.uint8), 256, 12)
    bases, values = kernels.impl.delete_batch(chunks, positions)
    a = rng.integers(0, 256, 244, dtype=np.uint8)
    b = a.copy()
    b[[3, 90, 200]] ^= 1
    b[50], b[51] = b[51], b[50]
    a32, b32 = a.astype(np.int32), b.astype(np.int32)
    short_a = rng.integers(0, 4, 48).astype(np.int32)
    short_b = rng.integers(0, 4, 48).astype(np.int32)
    index_rows = rng.integers(0, 256, (1000, 244), dtype=np.uint8)
    probe = index_rows[500].copy()
    probe[[10, 100]] ^= 3

    def index_roundtrip(k):
        idx = k.BaseIndex(244, 17)
        for i, row in enumerate(index_rows):
            idx.add(row, i)
        return sorted(idx.similar_candidates(probe))

    return [
        ("chacha20_keystream 64 KiB", lambda k: bytes(k.chacha20_keystream(bytes(32), 1 << 16))),
        ("derive_positions_batch 512x(256,12)", lambda k: k.derive_positions_batch(keys, 256, 12)),
        ("delete_batch 2048x256", lambda k: k.delete_batch(chunks, positions)),
        ("reinsert_batch 2048x244", lambda k: k.reinsert_batch(bases, positions, values)),
        ("hamming 244", lambda k: k.hamming(a, b)),
        ("swap_change_upper 244", lambda k: k.swap_change_upper(a32, b32, True)[0]),
        ("swap_change_dp 244, bound 4", lambda k: k.swap_change_dp(a32, b32, 256, 4, True, False, 1 << 22)[0]),
        ("damerau_levenshtein 48x48", lambda k: k.damerau_levenshtein_lw(short_a, short_b, 4)),
        ("BaseIndex 1000 adds + query", index_roundtrip),
    ]


def _same(x, y) -> bool:
    if isinstance(x, tuple):
        return len(x) == len(y) and all(_same(p, q) for p, q in zip(x, y))
    if isinstance(x, np.ndarray):
        return np.array_equal(x, y)
    return x == y


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", help="also write results here")
    args = parser.parse_args(argv)

    found = kernels.backends()
    if "cython" not in found:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    pure, fast = found["python"], found["cython"]
    rows = []
    print(f"{'kernel':40} {'python ms':>11} {'cython ms':>11} {'speedup':>9}")
    for name, fn in workloads(np.random.default_rng(0)):
        if not _same(fn(pure), fn(fast)):
            raise SystemExit(f"backends disagree on {name}")
        times = {}
        for label, mod in (("python", pure), ("cython", fast)):
            timer = timeit.Timer(lambda: fn(mod))
            number, _ = timer.autorange()
            times[label] = min(timer.repeat(args.repeat, number)) / number * 1e3
        speedup = times["python"] / times["cython"]
        rows.append({"kernel": name, **{f"{k}_ms": v for k, v in times.items()}, "speedup": speedup})
        print(f"{name:40} {times['python']:11.3f} {times['cython']:11.3f} {speedup:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
