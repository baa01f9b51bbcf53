"""Variation-independent parameterizations of binary-outcome effect measures."""

from vipar._backend import BACKEND
from vipar.measures import (
    DomainError,
    EffectVector,
    ProbTable,
    RiskPair,
    TargetPair,
    check_rr_sr_feasible,
    forward_gop,
    forward_rr_op,
    gop_bracket,
    gop_residual,
    inverse_gop,
    inverse_gop_many,
    inverse_rr_op,
    inverse_rr_op_many,
    rbc_risk,
)
from vipar.rootfind import Bracket, RootResult, SolverConfig, solve_monotone

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Bracket",
    "DomainError",
    "EffectVector",
    "ProbTable",
    "RiskPair",
    "RootResult",
    "SolverConfig",
    "TargetPair",
    "check_rr_sr_feasible",
    "forward_gop",
    "forward_rr_op",
    "gop_bracket",
    "gop_residual",
    "inverse_gop",
    "inverse_gop_many",
    "inverse_rr_op",
    "inverse_rr_op_many",
    "rbc_risk",
    "solve_monotone",
]
