import numpy as np
import pytest

from imptools.imp import ImpModel, Partition
from imptools.markov import Alphabet, MarkovModel, random_markov_model


def ring_switch(mu: float = 0.5, rho: float = 0.5) -> MarkovModel:
    """Order-2 switch over {A, B, C} with states AA, AB, BC, CA.

    AA emits A w.p. 1-mu and B w.p. mu; AB always emits C; BC always emits A;
    CA emits A w.p. rho and B w.p. 1-rho.
    """
    lab = Alphabet("ABC")
    A, B, C = 0, 1, 2
    rows = {
        (A, A): [1 - mu, mu, 0.0],
        (A, B): [0.0, 0.0, 1.0],
        (B, C): [1.0, 0.0, 0.0],
        (C, A): [rho, 1 - rho, 0.0],
    }
    return MarkovModel(lab, 2, rows, (A, A))


def random_imp_model(rng, sizes=(2, 3), orders=(1, 0), switch_order=1, zero_fraction=0.0) -> ImpModel:
    """Small random IMP over a contiguous alphabet, blocks in canonical order."""
    alpha = sum(sizes)
    alphabet = Alphabet("abcdefghijklmnopqrstuvwxyz"[:alpha])
    blocks, start = [], 0
    for s in sizes:
        blocks.append(tuple(range(start, start + s)))
        start += s
    part = Partition(alphabet, blocks)
    comps = [
        random_markov_model(part.block_alphabet(i), k, rng, zero_fraction=zero_fraction)
        for i, k in enumerate(orders)
    ]
    switch = random_markov_model(part.switch_alphabet(), switch_order, rng)
    return ImpModel(part, comps, switch)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
