"""Sensing-capacity lower bounds for random sensor networks observing a
binary pairwise Markov random field on a torus, with Monte Carlo
corroboration by exact MAP decoding on small grids."""

from .capacity import (
    CapacityQuery,
    CapacityResult,
    OptimizerOptions,
    clb,
    clb_c0,
    clb_c1,
    oracle_local_search,
    pairwise_exponent,
    reliability_exponent,
    typical_field_type,
)
from .mrf import MRFModel, TargetField
from .montecarlo import TrialConfig, estimate_pe, rate_sweep
from .sensing import NoiseChannel, SensingFunction, SensorNetwork, generate_network

__all__ = [
    "CapacityQuery",
    "CapacityResult",
    "MRFModel",
    "NoiseChannel",
    "OptimizerOptions",
    "SensingFunction",
    "SensorNetwork",
    "TargetField",
    "TrialConfig",
    "clb",
    "clb_c0",
    "clb_c1",
    "estimate_pe",
    "generate_network",
    "oracle_local_search",
    "pairwise_exponent",
    "rate_sweep",
    "reliability_exponent",
    "typical_field_type",
]
