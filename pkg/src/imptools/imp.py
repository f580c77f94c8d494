"""Interleaved Markov processes: partitions, models, likelihood and the product FSM."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ModelError, UnknownSymbol
from .markov import (
    Alphabet,
    MarkovModel,
    _cdf_table,
    as_codes,
    stationary_vector,
)


def block_label(i: int) -> str:
    """Display label of the ``i``-th block in canonical order: A, B, ..., Z, B26, ..."""
    return chr(ord("A") + i) if i < 26 else f"B{i}"


class Partition:
    """Partition of a global alphabet into disjoint nonempty blocks.

    Blocks are stored in canonical form: symbol codes sorted inside each block
    and blocks sorted by their smallest code. Block ``i`` carries switch label
    ``i``.
    """

    __slots__ = ("alphabet", "blocks", "_lut", "_hash")

    def __init__(self, alphabet: Alphabet, blocks: Iterable[Iterable[int]]):
        canon = tuple(sorted(tuple(sorted(int(x) for x in b)) for b in blocks))
        alpha = len(alphabet)
        seen: set[int] = set()
        for b in canon:
            if not b:
                raise ModelError("partition blocks must be nonempty")
            for x in b:
                if not 0 <= x < alpha:
                    raise UnknownSymbol(f"symbol code {x} outside alphabet of size {alpha}")
                if x in seen:
                    raise ModelError(f"symbol {alphabet.labels[x]!r} appears in two blocks")
                seen.add(x)
        if len(seen) != alpha:
            missing = [alphabet.labels[i] for i in range(alpha) if i not in seen]
            raise ModelError(f"partition does not cover symbols {missing}")
        self.alphabet = alphabet
        self.blocks: tuple[tuple[int, ...], ...] = canon
        lut = np.empty(alpha, dtype=np.int64)
        for i, b in enumerate(canon):
            lut[list(b)] = i
        lut.setflags(write=False)
        self._lut = lut
        self._hash = hash(canon)

    @classmethod
    def from_labels(cls, alphabet: Alphabet, blocks: Iterable[Iterable[object]]) -> "Partition":
        return cls(alphabet, [[alphabet.code(x) for x in b] for b in blocks])

    @classmethod
    def from_assignment(cls, alphabet: Alphabet, assignment: Sequence[int]) -> "Partition":
        groups: dict[int, list[int]] = {}
        for sym, g in enumerate(assignment):
            groups.setdefault(int(g), []).append(sym)
        return cls(alphabet, groups.values())

    @classmethod
    def single_block(cls, alphabet: Alphabet) -> "Partition":
        return cls(alphabet, [range(len(alphabet))])

    @property
    def m(self) -> int:
        return len(self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @property
    def label_of(self) -> np.ndarray:
        """Array mapping symbol code to block index."""
        return self._lut

    def block_alphabet(self, i: int) -> Alphabet:
        return Alphabet(self.alphabet.labels[x] for x in self.blocks[i])

    def switch_alphabet(self) -> Alphabet:
        return Alphabet(block_label(i) for i in range(self.m))

    def labelled_blocks(self) -> list[list[str]]:
        return [[self.alphabet.labels[x] for x in b] for b in self.blocks]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Partition) and self.blocks == other.blocks and self.alphabet == other.alphabet

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: "Partition") -> bool:
        return self.blocks < other.blocks

    def __repr__(self) -> str:
        inner = ", ".join("{" + ",".join(b) + "}" for b in self.labelled_blocks())
        return f"Partition({inner})"

    def refines(self, coarse: "Partition") -> bool:
        return all(len({int(coarse.label_of[x]) for x in b}) == 1 for b in self.blocks)


@dataclass(frozen=True)
class OrderVector:
    component_orders: tuple[int, ...]
    switch_order: int

    def __post_init__(self):
        object.__setattr__(self, "component_orders", tuple(int(k) for k in self.component_orders))
        if any(k < 0 for k in self.component_orders) or self.switch_order < 0:
            raise ValueError("orders must be nonnegative")

    @classmethod
    def of(cls, *orders: int) -> "OrderVector":
        """``OrderVector.of(k1, ..., km, k_sw)``."""
        return cls(tuple(orders[:-1]), orders[-1])

    def as_tuple(self) -> tuple[int, ...]:
        return self.component_orders + (self.switch_order,)

    def check(self, partition: Partition) -> None:
        if len(self.component_orders) != partition.m:
            raise ValueError(
                f"order vector has {len(self.component_orders)} component orders for {partition.m} blocks"
            )


# ---------------------------------------------------------------------------
# Sequence operations
# ---------------------------------------------------------------------------


def project(seq: Sequence[int] | np.ndarray, block: Iterable[int]) -> np.ndarray:
    """Subsequence of ``seq`` keeping only symbols in ``block``."""
    seq = as_codes(seq)
    return seq[np.isin(seq, np.fromiter(block, dtype=np.int64))]


def switch_sequence(seq: Sequence[int] | np.ndarray, partition: Partition) -> np.ndarray:
    """Replace every symbol by the index of its block."""
    seq = as_codes(seq)
    if len(seq) and (seq.min() < 0 or seq.max() >= len(partition.alphabet)):
        raise UnknownSymbol("sequence contains a symbol not covered by the partition")
    return partition.label_of[seq]


def local_codes(seq: np.ndarray, partition: Partition, i: int) -> np.ndarray:
    """Projection of ``seq`` onto block ``i``, recoded to the block's own alphabet."""
    block = partition.blocks[i]
    local = np.full(len(partition.alphabet), -1, dtype=np.int64)
    local[list(block)] = np.arange(len(block))
    sub = local[seq]
    return sub[sub >= 0]


def split_streams(seq: np.ndarray, partition: Partition) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-block local-code streams and the switch sequence."""
    seq = as_codes(seq)
    labels = switch_sequence(seq, partition)
    local = np.empty(len(partition.alphabet), dtype=np.int64)
    for b in partition.blocks:
        local[list(b)] = np.arange(len(b))
    loc = local[seq]
    streams = [loc[labels == i] for i in range(partition.m)]
    return streams, labels


# ---------------------------------------------------------------------------
# IMP model
# ---------------------------------------------------------------------------


class ImpModel:
    """Interleaving of one component model per block, driven by a switch over block labels."""

    def __init__(self, partition: Partition, components: Sequence[MarkovModel], switch: MarkovModel):
        components = list(components)
        if len(components) != partition.m:
            raise ModelError(f"{len(components)} components for {partition.m} blocks")
        for i, comp in enumerate(components):
            if comp.alphabet != partition.block_alphabet(i):
                raise ModelError(
                    f"component {i} alphabet {list(comp.alphabet.labels)} does not match block "
                    f"{list(partition.block_alphabet(i).labels)}"
                )
        if len(switch.alphabet) != partition.m:
            raise ModelError(f"switch has {len(switch.alphabet)} labels for {partition.m} blocks")
        self.partition = partition
        self.components = components
        self.switch = switch

    @property
    def alphabet(self) -> Alphabet:
        return self.partition.alphabet

    @property
    def m(self) -> int:
        return self.partition.m

    @property
    def orders(self) -> OrderVector:
        return OrderVector(tuple(c.order for c in self.components), self.switch.order)

    def __repr__(self) -> str:
        return f"ImpModel({self.partition!r}, orders={self.orders.as_tuple()})"


def interleave_sample(
    imp: ImpModel, n: int, rng: np.random.Generator, return_labels: bool = False
):
    """Draw ``n`` symbols: a block label from the switch, then a symbol from that block's component.

    Unselected components keep their state. Two uniforms are consumed per
    step (switch, then component). With ``return_labels`` the switch label
    sequence is returned as well.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    u = rng.random((n, 2))
    sw = imp.switch
    sw_cdf = list(_cdf_table(sw.probs))
    sw_next = sw.next_index
    comp_cdf = [list(_cdf_table(c.probs)) for c in imp.components]
    comp_next = [c.next_index for c in imp.components]
    to_global = [np.asarray(b, dtype=np.int64) for b in imp.partition.blocks]
    comp_state = [c.initial_index for c in imp.components]
    s = sw.initial_index
    out = np.empty(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    for t in range(n):
        lab = int(np.searchsorted(sw_cdf[s], u[t, 0], side="right"))
        s = int(sw_next[s, lab])
        cs = comp_state[lab]
        a = int(np.searchsorted(comp_cdf[lab][cs], u[t, 1], side="right"))
        comp_state[lab] = int(comp_next[lab][cs, a])
        out[t] = to_global[lab][a]
        labels[t] = lab
    if return_labels:
        return out, labels
    return out


def log_prob_product(imp: ImpModel, seq: Sequence[int] | np.ndarray, stationary_start: bool = False) -> float:
    """``log2 P(seq)`` as switch probability times the component probabilities.

    Each factor starts from its model's fixed initial state, or with
    ``stationary_start`` from a stationary mixture over its states.
    """
    seq = as_codes(seq)
    if len(seq) == 0:
        return 0.0
    streams, labels = split_streams(seq, imp.partition)
    score = (lambda m, s: m.log_prob_stationary(s)) if stationary_start else (lambda m, s: m.log_prob(s))
    total = score(imp.switch, labels)
    if total == -math.inf:
        return total
    for comp, sub in zip(imp.components, streams):
        lp = score(comp, sub)
        if lp == -math.inf:
            return lp
        total += lp
    return total


def log_prob_sequential(imp: ImpModel, seq: Sequence[int] | np.ndarray) -> float:
    """``log2 P(seq)`` accumulated one symbol at a time (switch term plus component term)."""
    seq = as_codes(seq)
    part = imp.partition
    local = np.empty(len(part.alphabet), dtype=np.int64)
    for b in part.blocks:
        local[list(b)] = np.arange(len(b))
    sw = imp.switch
    s = sw.initial_index
    comp_state = [c.initial_index for c in imp.components]
    total = 0.0
    for z in seq.tolist():
        lab = int(part.label_of[z])
        p_sw = sw.probs[s, lab]
        comp = imp.components[lab]
        a = int(local[z])
        p_c = comp.probs[comp_state[lab], a]
        if p_sw == 0 or p_c == 0:
            return -math.inf
        total += math.log2(p_sw) + math.log2(p_c)
        s = int(sw.next_index[s, lab])
        comp_state[lab] = int(comp.next_index[comp_state[lab], a])
    return total


# ---------------------------------------------------------------------------
# Product FSM
# ---------------------------------------------------------------------------


class FsmSource:
    """Unifilar finite-state source.

    ``next_state[s, a]`` is the index of the state after emitting ``a`` from
    ``s`` (-1 where the emission has probability zero and the target was not
    materialized); ``emissions[s]`` is the conditional distribution at ``s``.
    """

    def __init__(
        self,
        states: Sequence[tuple],
        next_state: np.ndarray,
        emissions: np.ndarray,
        initial: int = 0,
        alphabet: Alphabet | None = None,
    ):
        self.states = [tuple(s) for s in states]
        self.next_state = np.asarray(next_state, dtype=np.int64)
        self.emissions = np.asarray(emissions, dtype=np.float64)
        self.initial = int(initial)
        S = len(self.states)
        if self.next_state.shape != self.emissions.shape or self.next_state.shape[0] != S:
            raise ModelError("next_state / emissions shape mismatch")
        if np.any(np.abs(self.emissions.sum(axis=1) - 1.0) > 1e-12):
            raise ModelError("FSM emission rows must sum to 1")
        bad = (self.emissions > 0) & (self.next_state < 0)
        if np.any(bad):
            raise ModelError("positive-probability emission without a next state")
        self.alphabet = alphabet

    @classmethod
    def from_markov(cls, model: MarkovModel) -> "FsmSource":
        return cls(model.states, model.next_index, model.probs, model.initial_index, model.alphabet)

    def __len__(self) -> int:
        return len(self.states)

    def transition_matrix(self) -> np.ndarray:
        S = len(self.states)
        T = np.zeros((S, S))
        for s in range(S):
            for a in np.flatnonzero(self.emissions[s]):
                T[s, self.next_state[s, a]] += self.emissions[s, a]
        return T

    def stationary(self) -> np.ndarray:
        return stationary_vector(self.transition_matrix())

    def log_prob(self, seq: Sequence[int] | np.ndarray) -> float:
        s = self.initial
        total = 0.0
        for a in as_codes(seq).tolist():
            p = self.emissions[s, a]
            if p == 0:
                return -math.inf
            total += math.log2(p)
            s = int(self.next_state[s, a])
        return total


def build_fsm(imp: ImpModel) -> FsmSource:
    """Product FSM over composite (component states..., switch state) tuples.

    Emitting ``a`` in block ``i`` advances only component ``i`` and the switch;
    ``P(a | s) = P_sw(i | s_sw) * P_i(a | s_i)``. Only states reachable from
    the composite initial state are materialized.
    """
    part = imp.partition
    alpha = len(part.alphabet)
    local = np.empty(alpha, dtype=np.int64)
    for b in part.blocks:
        local[list(b)] = np.arange(len(b))
    lab_of = part.label_of
    sw = imp.switch
    comps = imp.components

    def emission_row(state: tuple[int, ...]) -> np.ndarray:
        row = np.empty(alpha)
        sw_row = sw.probs[state[-1]]
        for a in range(alpha):
            i = lab_of[a]
            row[a] = sw_row[i] * comps[i].probs[state[i], local[a]]
        return row

    init = tuple(c.initial_index for c in comps) + (sw.initial_index,)
    index = {init: 0}
    states = [init]
    rows: list[np.ndarray] = []
    nexts: list[np.ndarray] = []
    queue = deque([init])
    while queue:
        st = queue.popleft()
        row = emission_row(st)
        nxt = np.full(alpha, -1, dtype=np.int64)
        for a in np.flatnonzero(row):
            i = int(lab_of[a])
            new = list(st)
            new[i] = int(comps[i].next_index[st[i], local[a]])
            new[-1] = int(sw.next_index[st[-1], i])
            new_t = tuple(new)
            if new_t not in index:
                index[new_t] = len(states)
                states.append(new_t)
                queue.append(new_t)
            nxt[a] = index[new_t]
        rows.append(row)
        nexts.append(nxt)
    # Rows were appended in BFS order, matching ``states``.
    emissions = np.vstack(rows)
    emissions /= emissions.sum(axis=1, keepdims=True)
    return FsmSource(states, np.vstack(nexts), emissions, 0, part.alphabet)


# ---------------------------------------------------------------------------
# Parameter counts
# ---------------------------------------------------------------------------


def count_imp_params(partition: Partition, orders: OrderVector) -> int:
    """Free parameters of an IMP-constrained model: components plus switch."""
    orders.check(partition)
    m = partition.m
    comp = sum(a**k * (a - 1) for a, k in zip(partition.sizes, orders.component_orders))
    return comp + (m - 1) * m**orders.switch_order


def count_fsm_params(partition: Partition, orders: OrderVector) -> int:
    """Free parameters of an unconstrained source on the same product FSM."""
    orders.check(partition)
    alpha = len(partition.alphabet)
    prod = 1
    for a, k in zip(partition.sizes, orders.component_orders):
        prod *= a**k
    return (alpha - 1) * partition.m**orders.switch_order * prod


def kappa_split_delta(m: int, k_sw: int) -> int:
    """Parameter increase when a memoryless component is split in two."""
    if m < 1 or k_sw < 0:
        raise ValueError("need m >= 1 and k_sw >= 0")
    return m * (m + 1) ** k_sw - (m - 1) * m**k_sw - 1
