"""Stochastic relations between Markov chains on possibly different state spaces."""

from .relcore import (
    Relation,
    RelationError,
    RealFn,
    StateSpace,
    build_relation,
    conjugate_fn,
    conjugate_set,
    induced,
    intersect,
    is_subset,
    restrict_to_box,
)
from .coupling import CouplingMatrix, Dist, DistError, StDecision, st_related, subset_oracle
from .kernels import (
    CouplingKernel,
    Kernel,
    PreservationError,
    SubrelationTrace,
    build_coupling_kernel,
    preserves,
    seq_coupling,
    subrelation,
)
from .ctmc import RateKernel, compare_stationary, ct_preserves, ct_subrelation, ct_subset_test, stationary, uniformize
from .rateexpr import RateSyntaxError, parse_rate
from .population import PopulationModel, partial_order_check, population_check, to_rate_kernel
from .queueing import alpha_eval, alpha_properties, queueing_formula, queueing_models, reproduce_queueing

__all__ = [
    "Relation",
    "RelationError",
    "RealFn",
    "StateSpace",
    "build_relation",
    "conjugate_fn",
    "conjugate_set",
    "induced",
    "intersect",
    "is_subset",
    "restrict_to_box",
    "CouplingMatrix",
    "Dist",
    "DistError",
    "StDecision",
    "st_related",
    "subset_oracle",
    "CouplingKernel",
    "Kernel",
    "PreservationError",
    "SubrelationTrace",
    "build_coupling_kernel",
    "preserves",
    "seq_coupling",
    "subrelation",
    "RateKernel",
    "compare_stationary",
    "ct_preserves",
    "ct_subrelation",
    "ct_subset_test",
    "stationary",
    "uniformize",
    "RateSyntaxError",
    "parse_rate",
    "PopulationModel",
    "partial_order_check",
    "population_check",
    "to_rate_kernel",
    "alpha_eval",
    "alpha_properties",
    "queueing_formula",
    "queueing_models",
    "reproduce_queueing",
]

__version__ = "0.1.0"
