"""Sampling, analysis and penalized-ML deinterleaving of interleaved Markov processes."""

__version__ = "0.1.0"

from .deinterleave import (  # noqa: E402
    CostBreakdown,
    CostEvaluator,
    SearchParams,
    best_orders,
    cost,
    deinterleave_exhaustive,
    deinterleave_heuristic,
    neighborhood,
)
from .imp import (  # noqa: E402
    FsmSource,
    ImpModel,
    OrderVector,
    Partition,
    build_fsm,
    count_fsm_params,
    count_imp_params,
    interleave_sample,
    kappa_split_delta,
    log_prob_product,
    log_prob_sequential,
    project,
    switch_sequence,
)
from .markov import (  # noqa: E402
    Alphabet,
    CountTable,
    MarkovModel,
    count_transitions,
    empirical_entropy,
    estimate_order,
    sample,
    stationary_distribution,
)
from .structure import (  # noqa: E402
    DominationReport,
    NotMergeable,
    canonicalize,
    dominates,
    domination_report,
    enumerate_compatible_partitions,
    fsm_divergence,
    split_memoryless,
    try_merge,
)
