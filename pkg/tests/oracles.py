"""Brute-force reference implementations used only by the tests."""

from collections import deque
from itertools import product


def all_strings(alphabet: int, max_len: int):
    for n in range(max_len + 1):
        yield from product(range(alphabet), repeat=n)


def _bfs(source: tuple, neighbours) -> dict:
    dist = {source: 0}
    todo = deque([source])
    while todo:
        s = todo.popleft()
        for t in neighbours(s):
            if t not in dist:
                dist[t] = dist[s] + 1
                todo.append(t)
    return dist


def substitutions(s, alphabet):
    for i, c in enumerate(s):
        for v in range(alphabet):
            if v != c:
                yield s[:i] + (v,) + s[i + 1 :]


def adjacent_swaps(s):
    for i in range(len(s) - 1):
        if s[i] != s[i + 1]:
            yield s[:i] + (s[i + 1], s[i]) + s[i + 2 :]


def insertions(s, alphabet):
    for i in range(len(s) + 1):
        for v in range(alphabet):
            yield s[:i] + (v,) + s[i:]


def deletions(s):
    for i in range(len(s)):
        yield s[:i] + s[i + 1 :]


def bfs_hamming(source, alphabet):
    return _bfs(tuple(source), lambda s: substitutions(s, alphabet))


def bfs_swap_change(source, alphabet):
    return _bfs(tuple(source), lambda s: [*substitutions(s, alphabet), *adjacent_swaps(s)])


def bfs_edit(source, alphabet, max_len):
    """Insert / delete / substitute / adjacent swap, strings capped at ``max_len``."""

    def nb(s):
        yield from substitutions(s, alphabet)
        yield from adjacent_swaps(s)
        yield from deletions(s)
        if len(s) < max_len:
            yield from insertions(s, alphabet)

    return _bfs(tuple(source), nb)
