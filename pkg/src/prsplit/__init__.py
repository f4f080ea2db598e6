"""Relaxed Peaceman-Rachford splitting with convergence certificates."""

from .operators import (
    AffineOperator,
    LeastSquaresGradient,
    Operator,
    ScaledIdentity,
    ShiftedOperator,
    SubspaceNormalCone,
    WeightedL1Subdifferential,
    ZeroOperator,
    resolvent_least_squares,
    resolvent_shifted,
    resolvent_weighted_l1,
    verify_inclusion,
)
from .splitting import PRConfig, PRState, Regime, SolveResult, pr_step, regime, run

__version__ = "0.1.0"

__all__ = [
    "AffineOperator",
    "LeastSquaresGradient",
    "Operator",
    "ScaledIdentity",
    "ShiftedOperator",
    "SubspaceNormalCone",
    "WeightedL1Subdifferential",
    "ZeroOperator",
    "resolvent_least_squares",
    "resolvent_shifted",
    "resolvent_weighted_l1",
    "verify_inclusion",
    "PRConfig",
    "PRState",
    "Regime",
    "SolveResult",
    "pr_step",
    "regime",
    "run",
]
