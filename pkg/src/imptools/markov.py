"""Finite-order Markov models over finite alphabets.

Sequences are handled as arrays of integer symbol codes; an :class:`Alphabet`
maps codes to string labels. All entropies are in bits, and every sequence is
scored under the fixed-initial-state convention: with order ``k`` the first
``k`` symbols act as context and are not counted as emissions.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ModelError, NonErgodic, UnknownSymbol

STOCHASTIC_TOL = 1e-12
DENSE_STATIONARY_LIMIT = 2048
DEFAULT_ORDER_CAP = 8
# Context lookup tables are kept dense up to this many rows.
_DENSE_CONTEXT_LIMIT = 1 << 22
_BINCOUNT_LIMIT = 1 << 22


class Alphabet:
    """Ordered collection of distinct symbol labels; codes are positions."""

    __slots__ = ("labels", "_index")

    def __init__(self, labels: Iterable[object]):
        labels = tuple(str(x) for x in labels)
        if not labels:
            raise ModelError("alphabet must be nonempty")
        if len(set(labels)) != len(labels):
            raise ModelError(f"duplicate symbols in alphabet {labels!r}")
        self.labels = labels
        self._index = {lab: i for i, lab in enumerate(labels)}

    @classmethod
    def from_sequence(cls, tokens: Iterable[object]) -> "Alphabet":
        """Alphabet of the distinct tokens, sorted by label."""
        return cls(sorted({str(t) for t in tokens}))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Alphabet) and self.labels == other.labels

    def __hash__(self) -> int:
        return hash(self.labels)

    def __repr__(self) -> str:
        return f"Alphabet({list(self.labels)!r})"

    def code(self, label: object) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            raise UnknownSymbol(f"symbol {label!r} not in alphabet {list(self.labels)}") from None

    def encode(self, tokens: Iterable[object]) -> np.ndarray:
        return np.fromiter((self.code(t) for t in tokens), dtype=np.int64)

    def decode(self, codes: Iterable[int]) -> list[str]:
        return [self.labels[int(c)] for c in codes]


def as_codes(seq: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("sequence must be one-dimensional")
    return arr


# ---------------------------------------------------------------------------
# Counting and empirical entropy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CountTable:
    """Context -> symbol transition counts of one sequence at one order."""

    order: int
    counts: dict[tuple[tuple[int, ...], int], int] = field(default_factory=dict)
    context_totals: dict[tuple[int, ...], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.context_totals.values())


def _context_keys(seq: np.ndarray, k: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer-encoded contexts and symbols for every counted transition."""
    n = len(seq)
    ctx = np.zeros(n - k, dtype=np.int64)
    for j in range(k):
        ctx = ctx * alpha + seq[j : n - k + j]
    return ctx, seq[k:]


def count_transitions(seq: Sequence[int] | np.ndarray, k: int) -> CountTable:
    """Count transitions ``seq[i-k:i] -> seq[i]`` for ``i >= k``."""
    if k < 0:
        raise ValueError("order must be nonnegative")
    seq = as_codes(seq)
    if len(seq) <= k:
        return CountTable(order=k)
    windows = np.lib.stride_tricks.sliding_window_view(seq, k + 1)
    rows, freq = np.unique(windows, axis=0, return_counts=True)
    counts: dict[tuple[tuple[int, ...], int], int] = {}
    totals: dict[tuple[int, ...], int] = {}
    for row, c in zip(rows.tolist(), freq.tolist()):
        ctx = tuple(row[:k])
        counts[(ctx, row[k])] = c
        totals[ctx] = totals.get(ctx, 0) + c
    return CountTable(order=k, counts=counts, context_totals=totals)


def _xlog2x_sum(values: np.ndarray) -> float:
    v = values[values > 0].astype(np.float64)
    return float(np.dot(v, np.log2(v)))


def empirical_entropy_codes(seq: np.ndarray, k: int, alpha: int) -> float:
    """Fast path of :func:`empirical_entropy` for an int64 array over ``range(alpha)``."""
    n = len(seq)
    if n <= k:
        return 0.0
    ctx, sym = _context_keys(seq, k, alpha)
    if k == 0:
        joint = np.bincount(sym, minlength=alpha)
        return max(_xlog2x_sum(np.array([n - k])) - _xlog2x_sum(joint), 0.0)
    size = alpha ** (k + 1)
    if size <= _BINCOUNT_LIMIT:
        joint = np.bincount(ctx * alpha + sym, minlength=size)
        totals = joint.reshape(-1, alpha).sum(axis=1)
    else:
        _, joint = np.unique(ctx * alpha + sym, return_counts=True)
        _, totals = np.unique(ctx, return_counts=True)
    return max(_xlog2x_sum(totals) - _xlog2x_sum(joint), 0.0)


def empirical_entropy(seq: Sequence[int] | np.ndarray, k: int, alpha: int | None = None) -> float:
    """Unnormalized ``k``-th order empirical entropy (bits) under a fixed initial state."""
    if k < 0:
        raise ValueError("order must be nonnegative")
    seq = as_codes(seq)
    if len(seq) == 0:
        return 0.0
    if alpha is None:
        alpha = int(seq.max()) + 1
    return empirical_entropy_codes(seq, k, alpha)


def parameter_count(alpha: int, k: int) -> int:
    """Free parameters of an order-``k`` model over ``alpha`` symbols."""
    return alpha**k * (alpha - 1)


def default_order_cap(n: int, alpha: int, cap: int = DEFAULT_ORDER_CAP) -> int:
    if alpha <= 1:
        return 0
    return max(0, min(cap, int(math.floor(math.log2(n + 1) / math.log2(alpha)))))


def order_costs(
    seq: Sequence[int] | np.ndarray,
    beta: float,
    k_max: int,
    alpha: int,
    penalty_length: int | None = None,
) -> list[tuple[int, float, float]]:
    """Per-order ``(k, entropy_bits, penalty_bits)`` without pruning; a debugging aid."""
    seq = as_codes(seq)
    n_pen = len(seq) if penalty_length is None else penalty_length
    log_n = math.log2(n_pen + 1)
    return [
        (k, empirical_entropy_codes(seq, k, alpha), beta * parameter_count(alpha, k) * log_n)
        for k in range(k_max + 1)
    ]


def estimate_order_detail(
    seq: np.ndarray,
    beta: float,
    k_max: int,
    alpha: int,
    penalty_length: int,
) -> tuple[int, float, float]:
    """Penalized-ML order with its entropy and penalty terms.

    Orders are scanned upward; once the penalty alone reaches the best total
    seen, no larger order can win, so the scan stops.
    """
    if alpha <= 1:
        return 0, 0.0, 0.0
    log_n = math.log2(penalty_length + 1)
    best = None
    for k in range(k_max + 1):
        pen = beta * parameter_count(alpha, k) * log_n
        if best is not None and pen >= best[1] + best[2]:
            break
        h = empirical_entropy_codes(seq, k, alpha)
        if best is None or h + pen < best[1] + best[2]:
            best = (k, h, pen)
    assert best is not None
    return best


def estimate_order(
    seq: Sequence[int] | np.ndarray,
    beta: float,
    k_max: int | None = None,
    alphabet_size: int | None = None,
    penalty_length: int | None = None,
) -> int:
    """Penalized ML Markov order estimate.

    Minimizes ``h_k(seq) + beta * alpha**k * (alpha - 1) * log2(n + 1)`` over
    ``k <= k_max``; ties go to the smaller order. ``alphabet_size`` defaults to
    the number of distinct symbols in ``seq`` and ``penalty_length`` (the ``n``
    inside the logarithm) to ``len(seq)``.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    seq = as_codes(seq)
    if len(seq) == 0:
        return 0
    if alphabet_size is None:
        uniq, seq = np.unique(seq, return_inverse=True)
        alphabet_size = len(uniq)
    n_pen = len(seq) if penalty_length is None else penalty_length
    if k_max is None:
        k_max = default_order_cap(len(seq), alphabet_size)
    return estimate_order_detail(seq, beta, k_max, alphabet_size, n_pen)[0]


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def _period(adj: list[list[int]], start: int) -> int:
    """Period of the strongly connected graph ``adj`` via BFS levels."""
    level = {start: 0}
    queue = deque([start])
    g = 0
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in level:
                level[v] = level[u] + 1
                queue.append(v)
            else:
                g = math.gcd(g, level[u] + 1 - level[v])
    return g


class MarkovModel:
    """Time-homogeneous order-``k`` Markov model with a fixed initial state.

    ``transitions`` maps each state (a length-``k`` tuple of symbol codes) to a
    probability vector over the alphabet. Only reachable states may be
    listed, and the chain over them must be irreducible and, unless
    ``allow_periodic`` is set, aperiodic.
    """

    def __init__(
        self,
        alphabet: Alphabet,
        order: int,
        transitions: Mapping[tuple[int, ...], Sequence[float]],
        initial_state: Sequence[int] | None = None,
        *,
        allow_periodic: bool = False,
    ):
        if order < 0:
            raise ModelError("order must be nonnegative")
        self.alphabet = alphabet
        self.order = order
        alpha = len(alphabet)
        self.allow_periodic = allow_periodic
        if initial_state is None:
            if order == 0:
                initial_state = ()
            else:
                initial_state = min(transitions)
        self.initial_state = tuple(int(x) for x in initial_state)
        if len(self.initial_state) != order:
            raise ModelError(f"initial state {self.initial_state} has length != order {order}")

        rows: dict[tuple[int, ...], np.ndarray] = {}
        for state, probs in transitions.items():
            state = tuple(int(x) for x in state)
            if len(state) != order or any(not 0 <= s < alpha for s in state):
                raise ModelError(f"bad state {state} for order {order} over {alpha} symbols")
            row = np.asarray(probs, dtype=np.float64)
            if row.shape != (alpha,):
                raise ModelError(f"state {state}: distribution has {row.size} entries, expected {alpha}")
            if np.any(row < 0) or not np.all(np.isfinite(row)):
                raise ModelError(f"state {state}: negative or non-finite probability")
            if abs(row.sum() - 1.0) > STOCHASTIC_TOL:
                raise ModelError(f"state {state}: probabilities sum to {row.sum()!r}")
            row.setflags(write=False)
            rows[state] = row
        if self.initial_state not in rows:
            raise ModelError(f"initial state {self.initial_state} has no distribution")

        # Reachability from the initial state over positive-probability edges.
        seen = {self.initial_state}
        queue = deque([self.initial_state])
        while queue:
            s = queue.popleft()
            for a in np.flatnonzero(rows[s]):
                t = self.next_state_of(s, int(a))
                if t not in rows:
                    raise ModelError(f"state {s} emits symbol {alphabet.labels[a]!r} into undefined state {t}")
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
        if len(seen) != len(rows):
            missing = sorted(set(rows) - seen)
            raise ModelError(f"states not reachable from initial state: {missing[:5]}")

        self.states: list[tuple[int, ...]] = sorted(rows)
        self._index = {s: i for i, s in enumerate(self.states)}
        S = len(self.states)
        self.probs = np.vstack([rows[s] for s in self.states])
        self.probs.setflags(write=False)
        nxt = np.full((S, alpha), -1, dtype=np.int64)
        for i, s in enumerate(self.states):
            for a in np.flatnonzero(self.probs[i]):
                nxt[i, a] = self._index[self.next_state_of(s, int(a))]
        self.next_index = nxt
        self.initial_index = self._index[self.initial_state]

        adj = [sorted(set(int(v) for v in nxt[i] if v >= 0)) for i in range(S)]
        n_comp = connected_components(self._adjacency(adj), directed=True, connection="strong")[0]
        if n_comp != 1:
            raise NonErgodic(f"chain has {n_comp} strongly connected components over its reachable states")
        self.period = _period(adj, self.initial_index)
        if self.period != 1 and not allow_periodic:
            raise NonErgodic(f"chain is periodic with period {self.period}")
        self._ctx_lut: np.ndarray | None = None

    @staticmethod
    def _adjacency(adj: list[list[int]]) -> csr_matrix:
        S = len(adj)
        r = [i for i, vs in enumerate(adj) for _ in vs]
        c = [v for vs in adj for v in vs]
        return csr_matrix((np.ones(len(r)), (r, c)), shape=(S, S))

    # -- construction helpers ------------------------------------------------

    @classmethod
    def memoryless(cls, alphabet: Alphabet, probs: Sequence[float], **kw) -> "MarkovModel":
        return cls(alphabet, 0, {(): probs}, (), **kw)

    @classmethod
    def from_matrix(
        cls, alphabet: Alphabet, matrix: Sequence[Sequence[float]], initial: int = 0, **kw
    ) -> "MarkovModel":
        """Order-1 model from a row-stochastic matrix; rows of unreachable states are dropped."""
        matrix = np.asarray(matrix, dtype=np.float64)
        alpha = len(alphabet)
        reach = {initial}
        stack = [initial]
        while stack:
            s = stack.pop()
            for a in np.flatnonzero(matrix[s]):
                if int(a) not in reach:
                    reach.add(int(a))
                    stack.append(int(a))
        if matrix.shape != (alpha, alpha):
            raise ModelError("transition matrix shape does not match alphabet")
        return cls(alphabet, 1, {(s,): matrix[s] for s in sorted(reach)}, (initial,), **kw)

    # -- basic queries ---------------------------------------------------------

    @property
    def alphabet_size(self) -> int:
        return len(self.alphabet)

    def next_state_of(self, state: tuple[int, ...], symbol: int) -> tuple[int, ...]:
        if self.order == 0:
            return ()
        return state[1:] + (symbol,)

    def state_index(self, state: Sequence[int]) -> int:
        return self._index[tuple(state)]

    def distribution(self, state: Sequence[int]) -> np.ndarray:
        return self.probs[self._index[tuple(state)]]

    @property
    def transitions(self) -> dict[tuple[int, ...], np.ndarray]:
        return {s: self.probs[i] for i, s in enumerate(self.states)}

    def transition_matrix(self) -> np.ndarray:
        """State-to-state transition matrix over :attr:`states`."""
        S = len(self.states)
        T = np.zeros((S, S))
        for i in range(S):
            for a in np.flatnonzero(self.probs[i]):
                T[i, self.next_index[i, a]] += self.probs[i, a]
        return T

    def with_initial_state(self, state: Sequence[int]) -> "MarkovModel":
        return MarkovModel(
            self.alphabet, self.order, self.transitions, tuple(state), allow_periodic=self.allow_periodic
        )

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, MarkovModel)
            and self.alphabet == other.alphabet
            and self.order == other.order
            and self.initial_state == other.initial_state
            and self.states == other.states
            and np.array_equal(self.probs, other.probs)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return (
            f"MarkovModel(alphabet={list(self.alphabet.labels)}, order={self.order}, "
            f"states={len(self.states)}, initial={self.initial_state})"
        )

    # -- likelihood ------------------------------------------------------------

    def _context_lut(self) -> np.ndarray | None:
        if self._ctx_lut is None:
            alpha = self.alphabet_size
            size = alpha**self.order
            if size > _DENSE_CONTEXT_LIMIT:
                return None
            lut = np.full(size, -1, dtype=np.int64)
            for i, s in enumerate(self.states):
                code = 0
                for x in s:
                    code = code * alpha + x
                lut[code] = i
            self._ctx_lut = lut
        return self._ctx_lut

    def state_path(self, seq: np.ndarray, start: Sequence[int] | None = None) -> np.ndarray:
        """State index before each emission of ``seq`` (-1 where the context is not a state)."""
        start = self.initial_state if start is None else tuple(start)
        k = self.order
        seq = as_codes(seq)
        if k == 0:
            return np.zeros(len(seq), dtype=np.int64)
        ext = np.concatenate([np.asarray(start, dtype=np.int64), seq])
        lut = self._context_lut()
        ctx, _ = _context_keys(ext, k, self.alphabet_size)
        ctx = ctx[: len(seq)]
        if lut is not None:
            return lut[ctx]
        windows = np.lib.stride_tricks.sliding_window_view(ext, k)[: len(seq)]
        return np.array([self._index.get(tuple(w), -1) for w in windows.tolist()], dtype=np.int64)

    def log_prob(self, seq: Sequence[int] | np.ndarray, start: Sequence[int] | None = None) -> float:
        """``log2 P(seq)`` emitting every symbol from the fixed start state."""
        seq = as_codes(seq)
        if len(seq) == 0:
            return 0.0
        path = self.state_path(seq, start)
        if np.any(path < 0):
            # A context outside the state set can only follow a zero-probability step.
            return -math.inf
        p = self.probs[path, seq]
        if np.any(p == 0):
            return -math.inf
        return float(np.sum(np.log2(p)))

    def log_prob_stationary(self, seq: Sequence[int] | np.ndarray) -> float:
        """``log2 P(seq)`` with the start state drawn from the stationary distribution."""
        seq = as_codes(seq)
        if len(seq) == 0:
            return 0.0
        pi = stationary_vector(self.transition_matrix())
        terms = [
            math.log2(w) + self.log_prob(seq, s) for s, w in zip(self.states, pi) if w > 0
        ]
        finite = [t for t in terms if t != -math.inf]
        if not finite:
            return -math.inf
        top = max(finite)
        return top + math.log2(sum(2.0 ** (t - top) for t in finite))


# ---------------------------------------------------------------------------
# Stationary analysis and sampling
# ---------------------------------------------------------------------------


def stationary_vector(T: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Unique stationary vector of a row-stochastic matrix.

    Raises :class:`NonErgodic` when more than one closed class exists.
    """
    T = np.asarray(T, dtype=np.float64)
    S = T.shape[0]
    graph = csr_matrix(T > 0)
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    if n_comp > 1:
        # A class is closed when no edge leaves it.
        rows, cols = graph.nonzero()
        leaving = {labels[r] for r, c in zip(rows, cols) if labels[r] != labels[c]}
        closed = n_comp - len(leaving)
        if closed != 1:
            raise NonErgodic(f"{closed} recurrent classes")
    if S <= DENSE_STATIONARY_LIMIT:
        A = T.T - np.eye(S)
        A[-1, :] = 1.0
        b = np.zeros(S)
        b[-1] = 1.0
        pi = np.linalg.lstsq(A, b, rcond=None)[0] if S > 1 else np.ones(1)
    else:
        pi = np.full(S, 1.0 / S)
        for _ in range(max_iter):
            nxt = 0.5 * (pi + pi @ T)  # lazy chain: same fixed point, no periodic oscillation
            if np.abs(nxt - pi).sum() < tol:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_distribution(model: MarkovModel) -> dict[tuple[int, ...], float]:
    """Stationary probability of every state of ``model``."""
    pi = stationary_vector(model.transition_matrix())
    return {s: float(p) for s, p in zip(model.states, pi)}


def symbol_marginals(model: MarkovModel) -> np.ndarray:
    """Stationary probability of emitting each symbol."""
    pi = stationary_vector(model.transition_matrix())
    return pi @ model.probs


def _cdf_table(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    cdf[:, -1] = 1.0
    return cdf


def sample(model: MarkovModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` symbols from ``model`` starting at its initial state.

    Inverse-CDF sampling over the canonical symbol order: one uniform per
    emitted symbol, so output is a pure function of the generator state.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    u = rng.random(n)
    cdf = _cdf_table(model.probs)
    if model.order == 0:
        return np.searchsorted(cdf[0], u, side="right").astype(np.int64)
    out = np.empty(n, dtype=np.int64)
    nxt = model.next_index
    s = model.initial_index
    cdf_rows = list(cdf)
    for t in range(n):
        a = int(np.searchsorted(cdf_rows[s], u[t], side="right"))
        out[t] = a
        s = int(nxt[s, a])
    return out


def random_markov_model(
    alphabet: Alphabet,
    order: int,
    rng: np.random.Generator,
    zero_fraction: float = 0.0,
    max_tries: int = 1000,
) -> MarkovModel:
    """Model with every conditional row drawn uniformly from the simplex.

    With ``zero_fraction > 0`` entries are zeroed at random (each row keeps at
    least one positive entry) and draws are repeated until the result is
    ergodic.
    """
    alpha = len(alphabet)
    states = [()] if order == 0 else [tuple(int(x) for x in t) for t in np.ndindex(*([alpha] * order))]
    for _ in range(max_tries):
        rows = {}
        for s in states:
            row = rng.dirichlet(np.ones(alpha))
            if zero_fraction > 0 and alpha > 1:
                mask = rng.random(alpha) < zero_fraction
                if mask.all():
                    mask[rng.integers(alpha)] = False
                row = np.where(mask, 0.0, row)
                row /= row.sum()
            rows[s] = row
        if zero_fraction == 0:
            return MarkovModel(alphabet, order, rows, states[0])
        # Keep only states reachable from the first state.
        try:
            reach = _reachable(rows, states[0], order)
            return MarkovModel(alphabet, order, {s: rows[s] for s in reach}, states[0])
        except (NonErgodic, ModelError):
            continue
    raise ModelError("could not draw an ergodic model")


def _reachable(rows, start, order):
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for a in np.flatnonzero(rows[s]):
            t = () if order == 0 else s[1:] + (int(a),)
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return seen
