import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_imp_model
from imptools.deinterleave import (
    CostEvaluator,
    SearchParams,
    best_orders,
    bits_beta,
    cost,
    deinterleave_exhaustive,
    deinterleave_heuristic,
    from_rgs,
    neighborhood,
    normalize,
    to_rgs,
)
from imptools.errors import SearchSpaceTooLarge
from imptools.imp import ImpModel, OrderVector, Partition, count_imp_params, interleave_sample
from imptools.markov import Alphabet, MarkovModel, empirical_entropy
from imptools.partitions import count_partitions, restricted_growth_strings, set_partitions, stirling2

AB = Alphabet("ab")


def test_cost_examples():
    seq = AB.encode("ab")
    one = Partition.single_block(AB)
    bd = cost(seq, one, OrderVector.of(0, 0), 0.5)
    assert bd.entropy_bits == pytest.approx(2.0)
    assert bd.kappa == 1
    assert bd.total_bits == pytest.approx(2 + 0.5 * math.log2(3))
    assert bd.total_bits == pytest.approx(2.7925, abs=1e-4)
    split = Partition(AB, [(0,), (1,)])
    bd2 = cost(seq, split, OrderVector.of(0, 0, 0), 0.5)
    assert bd2.entropy_bits == pytest.approx(2.0) and bd2.kappa == 1
    assert bd2.total_bits == pytest.approx(bd.total_bits)
    assert cost(seq, one, OrderVector.of(0, 0), 0.0).total_bits == bd.entropy_bits


def test_penalty_base():
    seq = AB.encode("ab")
    bd = cost(seq, Partition.single_block(AB), OrderVector.of(0, 0), 0.5, penalty_base=math.e)
    assert bd.penalty_bits == pytest.approx(0.5 * math.log(3))
    assert bits_beta(0.5, math.e) == pytest.approx(0.5 * math.log(2))
    with pytest.raises(ValueError):
        bits_beta(0.5, 1.0)
    with pytest.raises(ValueError):
        bits_beta(-0.1)


def test_cost_invariants(rng):
    imp = random_imp_model(rng, (2, 3), (1, 1), 1)
    seq = interleave_sample(imp, 500, rng)
    bd = cost(seq, imp.partition, imp.orders, 0.5)
    assert bd.total_bits == pytest.approx(bd.entropy_bits + bd.penalty_bits, abs=1e-9)
    assert bd.kappa == count_imp_params(imp.partition, imp.orders)


def test_best_orders_examples(rng):
    alphabet = Alphabet("abc")
    singles = Partition(alphabet, [(0,), (1,), (2,)])
    seq = rng.integers(0, 3, size=300)
    assert best_orders(seq, singles, 0.5).component_orders == (0, 0, 0)
    assert best_orders(np.array([1]), Partition.single_block(alphabet), 0.5).as_tuple() == (0, 0)


def test_best_orders_recover_truth():
    from imptools.harness import ExperimentConfig, random_imp, trial_rng

    rng = trial_rng(11)
    truth = random_imp(ExperimentConfig(), rng)
    seq = interleave_sample(truth, 100_000, rng)
    assert best_orders(seq, truth.partition, 0.5).as_tuple() == (1, 1, 1, 0)


# -- partitions ----------------------------------------------------------------


def test_rgs_enumeration_counts():
    for n in range(1, 8):
        got = list(restricted_growth_strings(n))
        assert len(got) == len({tuple(g) for g in got}) == count_partitions(n)
        assert got == sorted(got)
    assert [count_partitions(n) for n in range(1, 8)] == [1, 2, 5, 15, 52, 203, 877]
    assert stirling2(5, 2) == 15
    assert count_partitions(6, 2) == 1 + stirling2(6, 2)
    assert len(list(set_partitions("abcd", 2))) == 8


def test_neighborhood_example():
    abc = Alphabet("abc")
    p = Partition.from_labels(abc, [["a", "b"], ["c"]])
    got = {tuple(map(tuple, q.labelled_blocks())) for q in neighborhood(p, 1)}
    assert got == {
        (("a", "b"), ("c",)),
        (("a", "c"), ("b",)),
        (("a",), ("b", "c")),
        (("a",), ("b",), ("c",)),
        (("a", "b", "c"),),
    }
    assert neighborhood(p, 0) == {p}


def _brute_neighbors(rgs, t):
    # Every partition whose assignment differs in at most t symbols from some labelling of rgs.
    n = len(rgs)
    out = set()
    for cand in restricted_growth_strings(n):
        # minimal number of moved symbols = n - max matching of blocks
        blocks_a = {}
        for x, g in enumerate(rgs):
            blocks_a.setdefault(g, set()).add(x)
        blocks_b = {}
        for x, g in enumerate(cand):
            blocks_b.setdefault(g, set()).add(x)
        A, B = list(blocks_a.values()), list(blocks_b.values())
        import itertools

        best = 0
        k = min(len(A), len(B))
        for pa in itertools.permutations(range(len(A)), k):
            for pb in itertools.combinations(range(len(B)), k):
                for order in itertools.permutations(pb):
                    best = max(best, sum(len(A[i] & B[j]) for i, j in zip(pa, order)))
        if n - best <= t:
            out.add(tuple(cand))
    return out


@pytest.mark.parametrize("rgs", [(0, 0, 1), (0, 1, 2, 0), (0, 0, 0, 0), (0, 1, 1, 2)])
@pytest.mark.parametrize("t", [1, 2])
def test_neighborhood_matches_brute_force(rgs, t):
    alphabet = Alphabet(range(len(rgs)))
    got = {to_rgs(q) for q in neighborhood(from_rgs(alphabet, rgs), t)}
    assert got == _brute_neighbors(rgs, t)


def test_normalize():
    assert normalize([3, 3, 1, 0, 1]) == (0, 0, 1, 2, 1)


# -- evaluator ---------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_evaluator_matches_scratch_cost(seed):
    r = np.random.default_rng(seed)
    imp = random_imp_model(r, (2, 2, 1), (1, 0, 0), int(r.integers(0, 2)))
    seq = interleave_sample(imp, int(r.integers(1, 400)), r)
    ev = CostEvaluator(seq, 5, 0.5, 3)
    for _ in range(4):
        rgs = normalize(r.integers(0, 3, size=5).tolist())
        part = from_rgs(Alphabet(range(5)), rgs)
        orders = best_orders(seq, part, 0.5, 3)
        scratch = cost(seq, part, orders, 0.5)
        s = ev.score(rgs)
        assert s.total == pytest.approx(scratch.total_bits, rel=1e-12, abs=1e-9)
        assert ev.breakdown(rgs).orders == orders
        # moving one symbol and scoring incrementally agrees as well
        moved = ev.move(rgs, int(r.integers(5)), int(r.integers(0, 4)))
        mp = from_rgs(Alphabet(range(5)), moved.rgs)
        assert moved.total == pytest.approx(cost(seq, mp, best_orders(seq, mp, 0.5, 3), 0.5).total_bits, abs=1e-9)


# -- search ----------------------------------------------------------------------------


def test_exhaustive_iid_prefers_single_block(rng):
    seq = rng.integers(0, 2, size=2000)
    part, orders, bd = deinterleave_exhaustive(seq, 0.5, alphabet=AB)
    assert part == Partition.single_block(AB)


def test_exhaustive_single_symbol():
    part, orders, bd = deinterleave_exhaustive(np.array([2]), 0.5, alphabet=Alphabet("abc"))
    assert part.m == 1 and orders.as_tuple() == (0, 0)


def _two_component(seed, n):
    alphabet = Alphabet("abcd")
    part = Partition.from_labels(alphabet, [["a", "b"], ["c", "d"]])
    comps = [
        MarkovModel.from_matrix(part.block_alphabet(0), [[0.1, 0.9], [0.8, 0.2]], 0),
        MarkovModel.from_matrix(part.block_alphabet(1), [[0.85, 0.15], [0.25, 0.75]], 0),
    ]
    imp = ImpModel(part, comps, MarkovModel.memoryless(part.switch_alphabet(), [0.5, 0.5]))
    return imp, interleave_sample(imp, n, np.random.default_rng(seed))


def test_exhaustive_and_heuristic_find_truth():
    imp, seq = _two_component(3, 50_000)
    part, orders, bd = deinterleave_exhaustive(seq, 0.5, alphabet=imp.alphabet)
    assert part == imp.partition
    assert orders.as_tuple() == (1, 1, 0)
    hp, ho, hbd = deinterleave_heuristic(seq, 0.5, SearchParams(seed=1), imp.alphabet)
    assert hp == part
    assert hbd.total_bits == pytest.approx(bd.total_bits, abs=1e-9)


def test_heuristic_constant_sequence():
    alphabet = Alphabet("a")
    part, orders, bd = deinterleave_heuristic(np.zeros(100, dtype=np.int64), 0.5, alphabet=alphabet)
    assert part.labelled_blocks() == [["a"]]
    assert bd.entropy_bits == 0.0


def test_heuristic_deterministic():
    imp, seq = _two_component(5, 3000)
    a = deinterleave_heuristic(seq, 0.5, SearchParams(seed=9, restarts=2), imp.alphabet)
    b = deinterleave_heuristic(seq, 0.5, SearchParams(seed=9, restarts=2), imp.alphabet)
    assert a[0] == b[0] and a[2].total_bits == b[2].total_bits


def test_search_params_validation():
    with pytest.raises(ValueError):
        SearchParams(descent_radius=2, perturb_radius=2)
    with pytest.raises(ValueError):
        SearchParams(restarts=0)


def test_exhaustive_budget():
    with pytest.raises(SearchSpaceTooLarge):
        deinterleave_exhaustive(np.arange(12), 0.5, budget=1000)


def test_tie_break_fewer_blocks():
    # "ab": one block and two singletons cost the same; fewer blocks wins.
    part, _, _ = deinterleave_exhaustive(AB.encode("ab"), 0.5, alphabet=AB)
    assert part.m == 1


def test_random_set_partition_uniform():
    import collections

    from imptools.partitions import random_set_partition

    r = np.random.default_rng(0)
    counts = collections.Counter(tuple(random_set_partition(4, r)) for _ in range(30_000))
    assert set(counts) == {tuple(g) for g in restricted_growth_strings(4)}
    expected = 30_000 / 15
    assert all(abs(c - expected) < 5 * math.sqrt(expected) for c in counts.values())
    assert random_set_partition(0, r) == []


def test_kernel_fallback_agrees():
    from imptools import _kernels

    r = np.random.default_rng(1)
    for _ in range(20):
        k1 = int(r.integers(1, 4))
        digits = np.unique(r.integers(0, 6, size=(40, k1)), axis=0)
        counts = r.integers(1, 50, size=len(digits)).astype(np.float64)
        lut = r.integers(0, 3, size=6)
        py = _kernels._relabelled_entropy_py(digits, counts, lut, 3)
        assert _kernels.relabelled_entropy(digits, counts, lut, 3) == pytest.approx(max(py, 0.0), abs=1e-8)
