"""Penalized maximum-likelihood deinterleaving.

The cost of a partition with an order vector is the summed empirical entropy
of the component streams and the switch stream plus
``beta * kappa * log(n + 1)``, the logarithm taken in ``penalty_base``
(2 by default, so both terms are in bits). For a fixed partition the best orders are
chosen stream by stream, so search only runs over partitions: exhaustively
for small alphabets, or by a randomized local search with restarts.

Partitions are handled internally as restricted growth strings (``rgs[x]`` is
the block index of symbol ``x``, blocks numbered by first appearance), which
is exactly the canonical block order of :class:`~imptools.imp.Partition`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._kernels import relabelled_entropy
from .errors import SearchSpaceTooLarge
from .imp import OrderVector, Partition, count_imp_params, split_streams
from .markov import (
    Alphabet,
    as_codes,
    default_order_cap,
    empirical_entropy_codes,
    estimate_order_detail,
    parameter_count,
)
from .partitions import count_partitions, random_set_partition, restricted_growth_strings

DEFAULT_BETA = 0.5
PARTITION_BUDGET = 10**7
# Costs closer than this (relative) are treated as ties.
TIE_RTOL = 1e-9
DEFAULT_PENALTY_BASE = 2.0

RGS = tuple[int, ...]


@dataclass(frozen=True)
class CostBreakdown:
    entropy_bits: float
    kappa: int
    beta: float
    penalty_bits: float
    total_bits: float
    orders: OrderVector
    penalty_base: float = DEFAULT_PENALTY_BASE

    def to_dict(self) -> dict:
        return {
            "entropy_bits": self.entropy_bits,
            "kappa": self.kappa,
            "beta": self.beta,
            "penalty_bits": self.penalty_bits,
            "total_bits": self.total_bits,
            "orders": list(self.orders.as_tuple()),
            "penalty_base": self.penalty_base,
        }


@dataclass(frozen=True)
class SearchParams:
    restarts: int = 5
    patience: int = 15
    descent_radius: int = 1
    perturb_radius: int = 2
    seed: int = 0
    k_cap: int | None = None

    def __post_init__(self):
        if self.restarts < 1 or self.patience < 1:
            raise ValueError("restarts and patience must be positive")
        if not 1 <= self.descent_radius < self.perturb_radius:
            raise ValueError("need 1 <= descent_radius < perturb_radius")


# ---------------------------------------------------------------------------
# Cost
# ---------------------------------------------------------------------------


def bits_beta(beta: float, penalty_base: float = DEFAULT_PENALTY_BASE) -> float:
    """Coefficient on ``log2(n + 1)`` equivalent to ``beta`` on ``log_base(n + 1)``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if not penalty_base > 1:
        raise ValueError("penalty_base must exceed 1")
    return beta / math.log2(penalty_base)


def _stream_cap(k_cap: int | None, length: int, alpha: int) -> int:
    return default_order_cap(length, alpha) if k_cap is None else k_cap


def cost(
    seq: Sequence[int] | np.ndarray,
    partition: Partition,
    orders: OrderVector,
    beta: float = DEFAULT_BETA,
    penalty_base: float = DEFAULT_PENALTY_BASE,
) -> CostBreakdown:
    """Penalized cost of ``seq`` for a partition and an explicit order vector."""
    b = bits_beta(beta, penalty_base)
    orders.check(partition)
    seq = as_codes(seq)
    streams, labels = split_streams(seq, partition)
    h = sum(
        empirical_entropy_codes(s, k, size)
        for s, k, size in zip(streams, orders.component_orders, partition.sizes)
    )
    h += empirical_entropy_codes(labels, orders.switch_order, partition.m)
    kappa = count_imp_params(partition, orders)
    pen = b * kappa * math.log2(len(seq) + 1)
    return CostBreakdown(h, kappa, beta, pen, h + pen, orders, penalty_base)


def best_orders(
    seq: Sequence[int] | np.ndarray,
    partition: Partition,
    beta: float = DEFAULT_BETA,
    k_cap: int | None = None,
    penalty_base: float = DEFAULT_PENALTY_BASE,
) -> OrderVector:
    """Per-stream penalized-ML orders for ``partition``; penalties use the full length."""
    beta = bits_beta(beta, penalty_base)
    seq = as_codes(seq)
    n = len(seq)
    streams, labels = split_streams(seq, partition)
    comp = tuple(
        estimate_order_detail(s, beta, _stream_cap(k_cap, len(s), size), size, n)[0]
        for s, size in zip(streams, partition.sizes)
    )
    k_sw = estimate_order_detail(labels, beta, _stream_cap(k_cap, n, partition.m), partition.m, n)[0]
    return OrderVector(comp, k_sw)


# ---------------------------------------------------------------------------
# Partition helpers on restricted growth strings
# ---------------------------------------------------------------------------


def normalize(assignment: Iterable[int]) -> RGS:
    """Relabel block ids by first appearance."""
    relabel: dict[int, int] = {}
    return tuple([relabel.setdefault(g, len(relabel)) for g in assignment])


def to_rgs(partition: Partition) -> RGS:
    return tuple(int(x) for x in partition.label_of)


def from_rgs(alphabet: Alphabet, rgs: RGS) -> Partition:
    return Partition.from_assignment(alphabet, rgs)


def _blocks_of(rgs: RGS) -> list[tuple[int, ...]]:
    blocks: list[list[int]] = [[] for _ in range(max(rgs) + 1)]
    for x, g in enumerate(rgs):
        blocks[g].append(x)
    return [tuple(b) for b in blocks]


def _single_moves(rgs: RGS) -> set[RGS]:
    m = max(rgs) + 1
    sizes = [0] * m
    for g in rgs:
        sizes[g] += 1
    out = set()
    base = list(rgs)
    for x, g in enumerate(rgs):
        dests = [d for d in range(m) if d != g]
        if sizes[g] > 1:
            dests.append(m)
        for d in dests:
            cand = base.copy()
            cand[x] = d
            out.add(normalize(cand))
    return out


def neighborhood_rgs(rgs: RGS, t: int) -> set[RGS]:
    result = {rgs}
    frontier = {rgs}
    for _ in range(t):
        nxt = set()
        for p in frontier:
            nxt |= _single_moves(p)
        frontier = nxt - result
        result |= frontier
        if not frontier:
            break
    return result


def neighborhood(partition: Partition, t: int) -> set[Partition]:
    """Partitions obtained by moving at most ``t`` symbols to other (possibly new) blocks."""
    if t < 0:
        raise ValueError("radius must be nonnegative")
    alphabet = partition.alphabet
    return {from_rgs(alphabet, r) for r in neighborhood_rgs(to_rgs(partition), t)}


# ---------------------------------------------------------------------------
# Cached evaluator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Scored:
    total: float
    m: int
    rgs: RGS
    orders: tuple[int, ...]

    def key(self):
        return (self.m, self.rgs, self.orders)


def better(a: _Scored, b: _Scored) -> bool:
    """Strictly preferred under: lower cost, then fewer blocks, then canonical order, then orders."""
    tol = TIE_RTOL * max(1.0, abs(a.total), abs(b.total))
    if a.total < b.total - tol:
        return True
    if a.total > b.total + tol:
        return False
    return a.key() < b.key()


class CostEvaluator:
    """Partition costs for one sequence with per-block and per-partition caches.

    A block's component term depends only on its symbol set, so moving one
    symbol recomputes just the two affected component streams and the
    switch stream.
    """

    def __init__(
        self,
        seq: Sequence[int] | np.ndarray,
        alpha: int,
        beta: float = DEFAULT_BETA,
        k_cap: int | None = None,
        penalty_base: float = DEFAULT_PENALTY_BASE,
    ):
        self._beta_bits = bits_beta(beta, penalty_base)
        self.penalty_base = penalty_base
        self.seq = as_codes(seq)
        self.alpha = alpha
        self.n = len(self.seq)
        self.beta = beta
        self.k_cap = k_cap
        self._blocks: dict[tuple[int, ...], tuple[int, float, float]] = {}
        self._scores: dict[RGS, _Scored] = {}
        self._detail: dict[RGS, tuple[float, float, int]] = {}
        self._grams: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._pools: dict[tuple[RGS, int], list[RGS]] = {}
        self.evaluations = 0

    def block_term(self, block: tuple[int, ...]) -> tuple[int, float, float]:
        """``(order, entropy, penalty)`` of the component stream over ``block``."""
        term = self._blocks.get(block)
        if term is None:
            size = len(block)
            if size == 1:
                term = (0, 0.0, 0.0)
            else:
                local = np.full(self.alpha, -1, dtype=np.int64)
                local[list(block)] = np.arange(size)
                sub = local[self.seq]
                sub = sub[sub >= 0]
                term = estimate_order_detail(sub, self._beta_bits, _stream_cap(self.k_cap, len(sub), size), size, self.n)
            self._blocks[block] = term
        return term

    def _gram_table(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Distinct symbol ``(k+1)``-grams of the sequence with their counts."""
        table = self._grams.get(k)
        if table is None:
            if self.n <= k:
                table = (np.zeros((0, k + 1), dtype=np.int64), np.zeros(0))
            else:
                windows = np.lib.stride_tricks.sliding_window_view(self.seq, k + 1)
                code = np.zeros(len(windows), dtype=np.int64)
                for j in range(k + 1):
                    code = code * self.alpha + windows[:, j]
                uniq, counts = np.unique(code, return_counts=True)
                digits = np.empty((len(uniq), k + 1), dtype=np.int64)
                rest = uniq.copy()
                for j in range(k, -1, -1):
                    digits[:, j] = rest % self.alpha
                    rest //= self.alpha
                table = (digits, counts.astype(np.float64))
            self._grams[k] = table
        return table

    def switch_entropy(self, lut: np.ndarray, m: int, k: int) -> float:
        """Order-``k`` empirical entropy of the switch stream, from symbol gram counts."""
        digits, counts = self._gram_table(k)
        return relabelled_entropy(digits, counts, lut, m)

    def switch_term(self, rgs: RGS) -> tuple[int, float, float]:
        """``(order, entropy, penalty)`` of the switch stream; same rule as :func:`estimate_order_detail`."""
        m = max(rgs) + 1
        if m == 1:
            return 0, 0.0, 0.0
        lut = np.asarray(rgs, dtype=np.int64)
        log_n = math.log2(self.n + 1)
        best = None
        for k in range(_stream_cap(self.k_cap, self.n, m) + 1):
            pen = self._beta_bits * parameter_count(m, k) * log_n
            if best is not None and pen >= best[1] + best[2]:
                break
            h = self.switch_entropy(lut, m, k)
            if best is None or h + pen < best[1] + best[2]:
                best = (k, h, pen)
        return best

    def perturbation_pool(self, rgs: RGS, r: int) -> list[RGS]:
        key = (rgs, r)
        pool = self._pools.get(key)
        if pool is None:
            pool = sorted(neighborhood_rgs(rgs, r) - {rgs})
            self._pools[key] = pool
        return pool

    def score(self, rgs: RGS) -> _Scored:
        found = self._scores.get(rgs)
        if found is not None:
            return found
        self.evaluations += 1
        h = pen = 0.0
        orders = []
        for block in _blocks_of(rgs):
            k, hb, pb = self.block_term(block)
            orders.append(k)
            h += hb
            pen += pb
        k_sw, hs, ps = self.switch_term(rgs)
        orders.append(k_sw)
        h += hs
        pen += ps
        scored = _Scored(h + pen, max(rgs) + 1, rgs, tuple(orders))
        self._scores[rgs] = scored
        self._detail[rgs] = (h, pen, k_sw)
        return scored

    def move(self, rgs: RGS, symbol: int, dest: int) -> _Scored:
        """Score after moving ``symbol`` to block ``dest`` (``dest == m`` opens a new block)."""
        cand = list(rgs)
        cand[symbol] = dest
        return self.score(normalize(cand))

    def breakdown(self, rgs: RGS) -> CostBreakdown:
        s = self.score(rgs)
        h, pen, _ = self._detail[rgs]
        orders = OrderVector(s.orders[:-1], s.orders[-1])
        part = from_rgs(Alphabet(range(self.alpha)), rgs)
        kappa = count_imp_params(part, orders)
        return CostBreakdown(h, kappa, self.beta, pen, h + pen, orders, self.penalty_base)


def _alphabet_size(seq: np.ndarray, alphabet: Alphabet | None) -> Alphabet:
    if alphabet is not None:
        return alphabet
    size = int(seq.max()) + 1 if len(seq) else 1
    return Alphabet(range(size))


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


def deinterleave_exhaustive(
    seq: Sequence[int] | np.ndarray,
    beta: float = DEFAULT_BETA,
    max_blocks: int | None = None,
    k_cap: int | None = None,
    alphabet: Alphabet | None = None,
    budget: int = PARTITION_BUDGET,
    penalty_base: float = DEFAULT_PENALTY_BASE,
) -> tuple[Partition, OrderVector, CostBreakdown]:
    """Minimum-cost partition over every partition with at most ``max_blocks`` blocks."""
    seq = as_codes(seq)
    alphabet = _alphabet_size(seq, alphabet)
    alpha = len(alphabet)
    total = count_partitions(alpha, max_blocks)
    if total > budget:
        raise SearchSpaceTooLarge(f"{total} partitions exceed the budget of {budget}")
    ev = CostEvaluator(seq, alpha, beta, k_cap, penalty_base)
    best = None
    for rgs in restricted_growth_strings(alpha, max_blocks):
        s = ev.score(tuple(rgs))
        if best is None or better(s, best):
            best = s
    assert best is not None
    bd = ev.breakdown(best.rgs)
    return from_rgs(alphabet, best.rgs), bd.orders, bd


def _descend(ev: CostEvaluator, start: RGS, t: int) -> _Scored:
    current = ev.score(start)
    while True:
        cands = neighborhood_rgs(current.rgs, t)
        best = current
        for c in sorted(cands):
            s = ev.score(c)
            if better(s, best):
                best = s
        if best is current:
            return current
        current = best


def _perturb(ev: CostEvaluator, rgs: RGS, r: int, rng: np.random.Generator) -> RGS:
    pool = ev.perturbation_pool(rgs, r)
    if not pool:
        return rgs
    return pool[int(rng.integers(len(pool)))]


def _one_run(ev: CostEvaluator, params: SearchParams, rng: np.random.Generator) -> _Scored:
    # Uniform over set partitions; labelling symbols independently would
    # favour starts with many small blocks.
    start = tuple(random_set_partition(ev.alpha, rng))
    best = _descend(ev, start, params.descent_radius)
    stall = 0
    while stall < params.patience:
        cand = _descend(ev, _perturb(ev, best.rgs, params.perturb_radius, rng), params.descent_radius)
        if better(cand, best):
            best = cand
            stall = 0
        else:
            stall += 1
    return best


def restart_generators(seed: int, restarts: int) -> list[np.random.Generator]:
    """Independent PCG64 generators, one per restart, derived from the master seed."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(restarts)]


def deinterleave_heuristic(
    seq: Sequence[int] | np.ndarray,
    beta: float = DEFAULT_BETA,
    params: SearchParams = SearchParams(),
    alphabet: Alphabet | None = None,
    evaluator: CostEvaluator | None = None,
    penalty_base: float = DEFAULT_PENALTY_BASE,
) -> tuple[Partition, OrderVector, CostBreakdown]:
    """Randomized local search: greedy descent over radius-``t`` neighborhoods,
    random radius-``r`` perturbations of the run's best, ``R`` restarts."""
    seq = as_codes(seq)
    alphabet = _alphabet_size(seq, alphabet)
    alpha = len(alphabet)
    ev = evaluator or CostEvaluator(seq, alpha, beta, params.k_cap, penalty_base)
    if alpha == 1:
        bd = ev.breakdown((0,))
        return Partition.single_block(alphabet), bd.orders, bd
    best = None
    for rng in restart_generators(params.seed, params.restarts):
        s = _one_run(ev, params, rng)
        if best is None or better(s, best):
            best = s
    assert best is not None
    bd = ev.breakdown(best.rgs)
    return from_rgs(alphabet, best.rgs), bd.orders, bd
