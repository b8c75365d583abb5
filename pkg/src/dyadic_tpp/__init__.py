"""Dyadic approximation of categorical distributions under a rate floor.

Pick a full binary tree and a surjective token-to-leaf partition so that
leaf masses track the dyadic targets 2^-depth in total variation while the
expected leaf depth stays at or above a requested rate.
"""
from .assignment_dp import DiscretizedInstance, DpResult, StateCapExceeded, discretize, run_dp
from .blocking import AtomicUnit, build_atomic_units, unpack
from .distribution import (
    AssumptionReport,
    Classification,
    ProblemInstance,
    TokenDistribution,
    check_assumptions,
    classify,
    load_distribution,
    load_distribution_json,
    make_instance,
)
from .solver import (
    AssumptionError,
    NoCandidateError,
    OracleResult,
    Solution,
    brute_force,
    solve,
    verify,
)
from .stego import Codec, build_codec, decode, encode
from .transform import SeedSet, monotone_reorder, repair, seed, truncate
from .tree import HeightVector, Partition, divergence, enumerate_height_vectors, kraft_check, rate

__version__ = "0.1.0"
