"""String distances: Hamming, adjacent-swap + substitution, Damerau-Levenshtein.

All three are exact shortest edit-sequence lengths with unit costs. "Swap"
always means exchanging two neighbouring symbols.
"""

from __future__ import annotations

import numpy as np

from .core import SymbolString
from .errors import DistanceBudgetExceeded, LengthMismatchError
from .kernels import impl

# Above this bound the exact DP also prunes with the suffix multiset bound.
_LB_THRESHOLD = 16
DEFAULT_MAX_STATES = 2_000_000
# Symbols below this are used as kernel labels directly, without relabelling.
_DIRECT_SIGMA = 1 << 12


def _values(x) -> np.ndarray:
    if isinstance(x, SymbolString):
        return x.symbols
    return np.asarray(x)


def _check_pair(a, b) -> None:
    if isinstance(a, SymbolString) and isinstance(b, SymbolString) and a.q != b.q:
        raise LengthMismatchError(f"symbol widths differ: q={a.q} vs q={b.q}")


def _dense(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Relabel symbols of both strings to 0..sigma-1 (int32) for the kernels."""
    if a.size == 0 and b.size == 0:
        empty = np.empty(0, dtype=np.int32)
        return empty, empty, 0
    top = max(int(a.max(initial=0)), int(b.max(initial=0)))
    if top < _DIRECT_SIGMA and min(int(a.min(initial=0)), int(b.min(initial=0))) >= 0:
        return a.astype(np.int32), b.astype(np.int32), top + 1
    both = np.concatenate([a.astype(np.int64, copy=False), b.astype(np.int64, copy=False)])
    uniq, inv = np.unique(both, return_inverse=True)
    inv = inv.astype(np.int32)
    return inv[: len(a)].copy(), inv[len(a):].copy(), len(uniq)


def hamming(a, b) -> int:
    """Number of positions at which two equal-length strings differ."""
    _check_pair(a, b)
    av, bv = _values(a), _values(b)
    if len(av) != len(bv):
        raise LengthMismatchError(f"lengths differ: {len(av)} vs {len(bv)}")
    return int(np.count_nonzero(av != bv))


def swap_change_alignment(a, b, cutoff: int | None = None, *, max_states: int = DEFAULT_MAX_STATES):
    """Exact swap/change distance plus an optimal token assignment.

    Returns ``(distance, path)`` where ``path[p]`` is the index in ``a`` of the
    symbol that ends up at position ``p`` of ``b``. With a ``cutoff``, any
    distance above it is reported as ``cutoff + 1`` and ``path`` is None.
    """
    _check_pair(a, b)
    av, bv = _values(a), _values(b)
    if len(av) != len(bv):
        raise LengthMismatchError(f"lengths differ: {len(av)} vs {len(bv)}")
    if cutoff is not None and cutoff < 0:
        return cutoff + 1, None
    ai, bi, sigma = _dense(av, bv)
    upper, upath = impl.swap_change_upper(ai, bi, True)
    if upper <= 1:
        if cutoff is None or upper <= cutoff:
            return int(upper), upath
        return cutoff + 1, None
    bound = upper - 1 if cutoff is None else min(upper - 1, cutoff)
    try:
        d, path = impl.swap_change_dp(ai, bi, sigma, bound, True, bound > _LB_THRESHOLD, max_states)
    except OverflowError as exc:
        raise DistanceBudgetExceeded(str(exc)) from exc
    if d <= bound:
        return int(d), path
    if cutoff is None or upper <= cutoff:
        return int(upper), upath
    return cutoff + 1, None


def swap_change_distance(a, b, cutoff: int | None = None, *, max_states: int = DEFAULT_MAX_STATES) -> int:
    """Fewest adjacent swaps and substitutions turning ``a`` into ``b``.

    The search is exponential in the distance in the worst case; pass
    ``cutoff`` when only small distances matter.
    """
    return swap_change_alignment(a, b, cutoff, max_states=max_states)[0]


def damerau_levenshtein(a, b) -> int:
    """Fewest insertions, deletions, substitutions and adjacent swaps from ``a`` to ``b``."""
    _check_pair(a, b)
    ai, bi, sigma = _dense(_values(a), _values(b))
    return int(impl.damerau_levenshtein_lw(ai, bi, sigma))
