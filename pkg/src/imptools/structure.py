"""Structural analysis of IMP representations.

Domination between block labels of a switch, domination layers, memoryless
component splits and merges, canonical representations, enumeration of the
compatible partitions of a domination-free IMP, and the divergence between
two sources on a common state machine.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DominationPresent, NotMemoryless, StructureMismatch, UnknownLabel, ZeroMassPart
from .imp import FsmSource, ImpModel, Partition, build_fsm
from .markov import Alphabet, MarkovModel
from .partitions import set_partitions

MERGE_RTOL = 1e-9


def _label_index(switch: MarkovModel, label: int | str) -> int:
    if isinstance(label, (int, np.integer)):
        if not 0 <= label < len(switch.alphabet):
            raise UnknownLabel(f"label index {label} outside switch alphabet")
        return int(label)
    try:
        return switch.alphabet.code(label)
    except KeyError:
        raise UnknownLabel(f"label {label!r} not in switch alphabet {list(switch.alphabet.labels)}") from None


# ---------------------------------------------------------------------------
# Domination
# ---------------------------------------------------------------------------


def dominates(switch: MarkovModel, a: int | str, b: int | str) -> bool:
    """Whether ``a`` dominates ``b``: runs of ``b`` free of ``a`` have bounded length.

    Drop every edge of the positive-probability state graph that emits
    ``a``; ``b`` can repeat unboundedly exactly when some edge emitting ``b``
    lies on a cycle of what remains.
    """
    ia, ib = _label_index(switch, a), _label_index(switch, b)
    if ia == ib:
        return False
    S = len(switch.states)
    probs, nxt = switch.probs, switch.next_index
    rows, cols = [], []
    for s in range(S):
        for lab in np.flatnonzero(probs[s]):
            if lab != ia:
                rows.append(s)
                cols.append(int(nxt[s, lab]))
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(S, S))
    _, comp = connected_components(graph, directed=True, connection="strong")
    for s in range(S):
        if probs[s, ib] > 0 and comp[s] == comp[nxt[s, ib]]:
            return False
    return True


@dataclass
class DominationReport:
    labels: list[str]
    pairs: dict[tuple[str, str], bool]
    mutual_pairs: list[tuple[str, str]]
    totally_dominant: list[str]
    layers: list[list[str]] | None = field(default=None)

    @property
    def any_domination(self) -> bool:
        return any(self.pairs.values())

    @property
    def layers_absent(self) -> bool:
        return self.layers is None

    def to_dict(self) -> dict:
        return {
            "dominates": {f"{a}>{b}": v for (a, b), v in self.pairs.items()},
            "mutual_pairs": [list(p) for p in self.mutual_pairs],
            "totally_dominant": list(self.totally_dominant),
            "layers": self.layers,
            "layers_absent": self.layers is None,
        }


def domination_report(switch: MarkovModel) -> DominationReport:
    """Domination between every ordered pair of labels, with layers when they exist.

    Layer 0 holds the labels that dominate nothing; each later layer holds
    labels dominating only labels already placed. Layers are ``None`` when a
    mutually dominating pair exists.
    """
    labels = list(switch.alphabet.labels)
    m = len(labels)
    rel = {(i, j): dominates(switch, i, j) for i in range(m) for j in range(m) if i != j}
    pairs = {(labels[i], labels[j]): v for (i, j), v in rel.items()}
    mutual = [(labels[i], labels[j]) for i in range(m) for j in range(i + 1, m) if rel[i, j] and rel[j, i]]
    if m == 1:
        total = [labels[0]]
    else:
        total = [labels[i] for i in range(m) if all(rel[i, j] for j in range(m) if j != i)]
    layers = None
    if not mutual:
        placed: set[int] = set()
        layers = []
        while len(placed) < m:
            layer = [
                i for i in range(m)
                if i not in placed and all(j in placed for j in range(m) if j != i and rel[i, j])
            ]
            if not layer:  # cannot happen for a strict partial order
                layers = None
                break
            layers.append([labels[i] for i in layer])
            placed.update(layer)
    return DominationReport(labels, pairs, mutual, total, layers)


# ---------------------------------------------------------------------------
# Refinements, splits and merges
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Refinement:
    coarse: Partition
    fine: Partition
    block_map: tuple[int, ...]  # fine block index -> coarse block index

    @classmethod
    def of(cls, coarse: Partition, fine: Partition) -> "Refinement":
        mapping = []
        for b in fine.blocks:
            owners = {int(coarse.label_of[x]) for x in b}
            if len(owners) != 1:
                raise ValueError(f"{fine!r} does not refine {coarse!r}")
            mapping.append(owners.pop())
        return cls(coarse, fine, tuple(mapping))


def _switch_from_rows(
    alphabet: Alphabet,
    order: int,
    initial: tuple[int, ...],
    row_of,
    allow_periodic: bool = False,
) -> MarkovModel:
    """Build a switch by forward reachability; ``row_of(state)`` gives its distribution."""
    rows = {}
    queue = deque([initial])
    rows[initial] = row_of(initial)
    while queue:
        s = queue.popleft()
        for lab in np.flatnonzero(rows[s]):
            t = s[1:] + (int(lab),) if order else ()
            if t not in rows:
                rows[t] = row_of(t)
                queue.append(t)
    return MarkovModel(alphabet, order, rows, initial, allow_periodic=allow_periodic)


def split_memoryless(imp: ImpModel, block: int | str, parts: Sequence[Iterable[int]]) -> ImpModel:
    """Equivalent representation with a memoryless block split into ``parts``.

    Part ``j`` gets the component conditioned on ``B_j``; the switch keeps its
    order, its states are all label strings projecting onto original states,
    and the probability of selecting part ``j`` is the original block's
    selection probability times the mass of ``B_j``.
    """
    part = imp.partition
    i1 = _label_index(imp.switch, block)
    comp = imp.components[i1]
    if comp.order != 0:
        raise NotMemoryless(f"component {i1} has order {comp.order}")
    parts = [sorted(int(x) for x in p) for p in parts]
    if sorted(x for p in parts for x in p) != list(part.blocks[i1]):
        raise ValueError("parts must partition the block")
    if len(parts) == 1:
        return imp
    dist = dict(zip(part.blocks[i1], comp.probs[0]))
    masses = [sum(dist[x] for x in p) for p in parts]
    if any(w <= 0 for w in masses):
        raise ZeroMassPart("every part needs positive probability under the component")

    new_blocks = [b for j, b in enumerate(part.blocks) if j != i1] + [tuple(p) for p in parts]
    fine = Partition(part.alphabet, new_blocks)
    psi = np.array([int(part.label_of[b[0]]) for b in fine.blocks], dtype=np.int64)
    # Selection weight of each fine label within its coarse label.
    weight = np.ones(fine.m)
    part_label = {}
    for p, w in zip(parts, masses):
        j = int(fine.label_of[p[0]])
        weight[j] = w
        part_label[tuple(p)] = j

    components = []
    for j, b in enumerate(fine.blocks):
        if psi[j] == i1:
            probs = np.array([dist[x] for x in b]) / weight[j]
            components.append(MarkovModel.memoryless(fine.block_alphabet(j), probs / probs.sum()))
        else:
            components.append(imp.components[psi[j]])

    sw = imp.switch
    first_part = part_label[tuple(parts[0])]
    lift = {int(psi[j]): j for j in range(fine.m) if psi[j] != i1}
    lift[i1] = first_part
    init = tuple(lift[x] for x in sw.initial_state)

    def row_of(state):
        coarse = sw.distribution(tuple(int(psi[x]) for x in state))
        row = coarse[psi] * weight
        return row / row.sum()

    switch = _switch_from_rows(fine.switch_alphabet(), sw.order, init, row_of, sw.allow_periodic)
    return ImpModel(fine, components, switch)


class NotMergeable:
    """Returned by :func:`try_merge` when the switch forbids the merge."""

    def __init__(self, reason: str):
        self.reason = reason

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return f"NotMergeable({self.reason!r})"


def try_merge(imp: ImpModel, block_a: int | str, block_b: int | str) -> ImpModel | NotMergeable:
    """Merge two memoryless components if the switch keeps a constant selection ratio.

    The ratio ``gamma = P_sw(b | S) / P_sw(a | S)`` must be the same in every
    switch state where either is positive (relative tolerance 1e-9), and the
    merged switch must be well defined: states with equal merged history
    need equal merged conditionals.
    """
    sw = imp.switch
    ia, ib = _label_index(sw, block_a), _label_index(sw, block_b)
    if ia == ib:
        raise ValueError("cannot merge a block with itself")
    for i in (ia, ib):
        if imp.components[i].order != 0:
            raise NotMemoryless(f"component {i} has order {imp.components[i].order}")
    pa, pb = sw.probs[:, ia], sw.probs[:, ib]
    if np.any((pa > 0) != (pb > 0)):
        return NotMergeable("selection probabilities do not vanish together")
    live = pa > 0
    if not live.any():
        return NotMergeable("blocks are never selected")
    ratios = pb[live] / pa[live]
    gamma = float(ratios[0])
    if np.any(np.abs(ratios - gamma) > MERGE_RTOL * max(gamma, 1.0)):
        return NotMergeable(f"selection ratio varies across switch states ({ratios.min():.6g}..{ratios.max():.6g})")

    part = imp.partition
    merged_block = tuple(sorted(part.blocks[ia] + part.blocks[ib]))
    coarse = Partition(part.alphabet, [b for j, b in enumerate(part.blocks) if j not in (ia, ib)] + [merged_block])
    psi = np.array([int(coarse.label_of[b[0]]) for b in part.blocks], dtype=np.int64)
    im = int(coarse.label_of[merged_block[0]])

    # Merged switch rows, checked for consistency across fine states sharing a coarse history.
    rows: dict[tuple[int, ...], np.ndarray] = {}
    for s_idx, state in enumerate(sw.states):
        row = np.zeros(coarse.m)
        np.add.at(row, psi, sw.probs[s_idx])
        key = tuple(int(psi[x]) for x in state)
        if key in rows:
            if np.max(np.abs(rows[key] - row)) > MERGE_RTOL:
                return NotMergeable(f"merged switch ill-defined at history {key}")
        else:
            rows[key] = row
    init = tuple(int(psi[x]) for x in sw.initial_state)
    switch = _switch_from_rows(coarse.switch_alphabet(), sw.order, init, lambda s: rows[s], sw.allow_periodic)

    wa, wb = 1.0 / (1.0 + gamma), gamma / (1.0 + gamma)
    dist = {}
    for x, p in zip(part.blocks[ia], imp.components[ia].probs[0]):
        dist[x] = p * wa
    for x, p in zip(part.blocks[ib], imp.components[ib].probs[0]):
        dist[x] = p * wb
    components = []
    for j, b in enumerate(coarse.blocks):
        if j == im:
            probs = np.array([dist[x] for x in b])
            components.append(MarkovModel.memoryless(coarse.block_alphabet(j), probs / probs.sum()))
        else:
            src = int(part.label_of[b[0]])
            components.append(imp.components[src])
    return ImpModel(coarse, components, switch)


def canonicalize(imp: ImpModel) -> ImpModel:
    """Merge memoryless components pairwise until no merge is possible.

    Pairs are tried in canonical block order, lowest pair first; after every
    successful merge the scan restarts.
    """
    current = imp
    while True:
        memoryless = [i for i, c in enumerate(current.components) if c.order == 0]
        for i, j in itertools.combinations(memoryless, 2):
            merged = try_merge(current, i, j)
            if merged:
                current = merged
                break
        else:
            return current


def enumerate_compatible_partitions(imp: ImpModel, max_results: int | None = None) -> list[Partition]:
    """Partitions reachable from ``imp`` by memoryless splits, starting with its own.

    Requires a switch without domination; then (for a canonical input) these
    are all the partitions of IMP representations of the same process.
    """
    report = domination_report(imp.switch)
    if report.any_domination:
        raise DominationPresent("switch has alphabet domination; compatible partitions are not characterized")
    part = imp.partition
    options: list[list[list[tuple[int, ...]]]] = []
    for i, b in enumerate(part.blocks):
        comp = imp.components[i]
        if comp.order != 0 or len(b) == 1:
            options.append([[b]])
            continue
        mass = dict(zip(b, comp.probs[0]))
        choices = []
        for split in set_partitions(b):
            if all(sum(mass[x] for x in p) > 0 for p in split):
                choices.append([tuple(p) for p in split])
        options.append(choices)
    results = [part]
    seen = {part}
    for combo in itertools.product(*options):
        if max_results is not None and len(results) >= max_results:
            break
        cand = Partition(part.alphabet, [p for blocks in combo for p in blocks])
        if cand not in seen:
            seen.add(cand)
            results.append(cand)
    return results


# ---------------------------------------------------------------------------
# Divergence
# ---------------------------------------------------------------------------


def fsm_divergence(p: ImpModel | FsmSource, q: FsmSource) -> float:
    """Stationary-weighted conditional KL divergence ``D(P || Q)`` in bits per symbol."""
    if isinstance(p, ImpModel):
        p = build_fsm(p)
    if len(p.states) != len(q.states) or p.states != q.states or p.emissions.shape != q.emissions.shape:
        raise StructureMismatch("sources are not defined on the same state machine")
    # Zero-probability transitions carry no next state, so compare where both are live.
    live = (p.emissions > 0) & (q.emissions > 0)
    if np.any(p.next_state[live] != q.next_state[live]):
        raise StructureMismatch("next-state functions differ")
    pi = p.stationary()
    total = 0.0
    for s in range(len(p.states)):
        if pi[s] <= 0:
            continue
        ps, qs = p.emissions[s], q.emissions[s]
        mask = ps > 0
        if np.any(qs[mask] == 0):
            return math.inf
        total += pi[s] * float(np.sum(ps[mask] * np.log2(ps[mask] / qs[mask])))
    return max(total, 0.0)
