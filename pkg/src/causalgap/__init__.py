"""Causal direction inference and causal representation learning built on
generalization gaps between a training distribution and an intervened
transfer distribution."""

__version__ = "0.1.0"

from .probs import (  # noqa: F401
    A_TO_B,
    B_TO_A,
    Categorical,
    ConditionalTable,
    Dataset,
    DistributionPair,
    EntropyDelta,
    JointTable,
    conditional_kl,
    cross_entropy,
    entropy,
    entropy_deltas,
    joint_from_factorization,
    kl,
    make_pair,
    make_rng,
    sample,
)
from .direction import (  # noqa: F401
    DirectionScore,
    GapReport,
    generalization_gaps,
    population_gaps,
    score_sg,
)
