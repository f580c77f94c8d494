"""Set-partition enumeration by restricted growth strings."""

from __future__ import annotations

from typing import Iterator, Sequence


def restricted_growth_strings(n: int, max_blocks: int | None = None) -> Iterator[list[int]]:
    """Yield every restricted growth string of length ``n`` with at most ``max_blocks`` values.

    ``a[0] = 0`` and ``a[i] <= 1 + max(a[:i])``; each string encodes one set
    partition of ``range(n)``. Strings come out in lexicographic order.
    """
    if n == 0:
        yield []
        return
    cap = n if max_blocks is None else min(n, max_blocks)
    if cap < 1:
        return
    a = [0] * n
    # prefix_max[i] = max(a[:i+1])
    prefix_max = [0] * n
    while True:
        yield list(a)
        # Find the rightmost position that can still be incremented.
        i = n - 1
        while i > 0:
            limit = min(prefix_max[i - 1] + 1, cap - 1)
            if a[i] < limit:
                break
            i -= 1
        if i == 0:
            return
        a[i] += 1
        prefix_max[i] = max(prefix_max[i - 1], a[i])
        for j in range(i + 1, n):
            a[j] = 0
            prefix_max[j] = prefix_max[i]


def set_partitions(items: Sequence, max_blocks: int | None = None) -> Iterator[list[list]]:
    """Yield the set partitions of ``items`` as lists of blocks."""
    items = list(items)
    for rgs in restricted_growth_strings(len(items), max_blocks):
        blocks: list[list] = [[] for _ in range(max(rgs, default=-1) + 1)]
        for x, g in zip(items, rgs):
            blocks[g].append(x)
        yield blocks


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind."""
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    row = [1] + [0] * k  # S(0, j)
    for i in range(1, n + 1):
        new = [0] * (k + 1)
        for j in range(1, min(i, k) + 1):
            new[j] = j * row[j] + row[j - 1]
        row = new
    return row[k]


def count_partitions(n: int, max_blocks: int | None = None) -> int:
    cap = n if max_blocks is None else min(n, max_blocks)
    if n == 0:
        return 1
    return sum(stirling2(n, k) for k in range(1, cap + 1))


def _completions(n: int) -> list[list[int]]:
    # table[r][k]: ways to finish an RGS with r symbols left and k blocks open
    table = [[1] * (n + 2)]
    for r in range(1, n + 1):
        prev = table[-1]
        table.append([k * prev[k] + prev[k + 1] if k + 1 < len(prev) else 0 for k in range(n + 2)])
    return table


def random_set_partition(n: int, rng) -> list[int]:
    """Restricted growth string drawn uniformly over all set partitions of ``range(n)``."""
    if n == 0:
        return []
    table = _completions(n)
    rgs = [0]
    k = 1
    for i in range(1, n):
        rest = table[n - i - 1]
        u = rng.random() * table[n - i][k]
        # each open block is chosen with weight rest[k], a new block with rest[k + 1]
        if u < k * rest[k]:
            rgs.append(int(u // rest[k]))
        else:
            rgs.append(k)
            k += 1
    return rgs
