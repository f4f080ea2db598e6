"""A two-block instance on which relaxed PR fails to converge for large theta.

``A = 0 + beta I`` and ``B = N + beta_bar I`` on ``X = Y x Y``, where ``N`` is
the normal cone of ``{0} x Y``.  One PR step scales the two blocks by

    f1 = (1 + g beta - theta) / (1 + g beta)
    f2 = 1 - g (beta + beta_bar) theta / ((1 + g beta)(1 + g beta_bar))

(``g`` the resolvent parameter, 1 by default), so the iterates stop
converging once ``min(f1, f2) <= -1``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .operators import ShiftedOperator, SubspaceNormalCone, ZeroOperator
from .splitting import PRConfig, pr_step

__all__ = [
    "DivergenceInstance",
    "iteration_factors",
    "divergence_threshold",
    "classify_factor",
    "classify",
    "simulate",
    "SimulationResult",
    "theta_scan",
]

FACTOR_TOL = 1e-12


@dataclass(frozen=True)
class DivergenceInstance:
    beta: float = 0.0
    beta_bar: float = 0.0
    block_dim: int = 1
    gamma: float = 1.0

    def __post_init__(self):
        if not self.beta_bar >= self.beta >= 0:
            raise ValueError("need beta_bar >= beta >= 0")
        if self.block_dim < 1:
            raise ValueError("block_dim must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def dim(self):
        return 2 * self.block_dim

    def operators(self):
        n = self.block_dim
        mask = np.r_[np.ones(n, bool), np.zeros(n, bool)]
        A = ShiftedOperator(ZeroOperator(self.dim), self.beta)
        B = ShiftedOperator(SubspaceNormalCone(mask), self.beta_bar)
        return A, B

    def solution(self, x0):
        """The limit-compatible fixed point nearest ``x0``.

        With ``beta + beta_bar > 0`` the fixed point is 0; otherwise the second
        block is free and every ``(0, y)`` is a fixed point.
        """
        x0 = np.asarray(x0, dtype=float)
        x_star = np.zeros_like(x0)
        if self.beta + self.beta_bar == 0:
            x_star[self.block_dim:] = x0[self.block_dim:]
        return x_star


def iteration_factors(inst, theta):
    """The two blockwise linear factors of one PR step."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    gb, gbb = inst.gamma * inst.beta, inst.gamma * inst.beta_bar
    f1 = (1.0 + gb - theta) / (1.0 + gb)
    f2 = 1.0 - (gb + gbb) * theta / ((1.0 + gb) * (1.0 + gbb))
    return f1, f2


def divergence_threshold(inst):
    """Smallest theta with ``min(f1, f2) <= -1``.

    ``min{2(1 + g beta), 2 + 2(1 + g^2 beta beta_bar)/(g(beta + beta_bar))}``,
    the second term infinite when ``beta + beta_bar = 0``.
    """
    gb, gbb = inst.gamma * inst.beta, inst.gamma * inst.beta_bar
    first = 2.0 * (1.0 + gb)
    second = math.inf if gb + gbb == 0 else 2.0 + 2.0 * (1.0 + gb * gbb) / (gb + gbb)
    return min(first, second)


def classify_factor(f, tol=FACTOR_TOL):
    if abs(f) > 1.0 + tol:
        return "diverges"
    if abs(f) >= 1.0 - tol and not math.isclose(f, 1.0, abs_tol=tol):
        return "oscillates"
    return "converges"


_SEVERITY = {"converges": 0, "oscillates": 1, "diverges": 2}


def classify(inst, theta, x0=None):
    """Overall behaviour from the factor magnitudes.

    A factor equal to 1 leaves its block fixed and counts as convergent.  Only
    blocks where ``x0`` is nonzero count; by default both do.
    """
    f = iteration_factors(inst, theta)
    active = (True, True)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        n = inst.block_dim
        active = (bool(np.any(x0[:n])), bool(np.any(x0[n:])))
    labels = [classify_factor(fi) for fi, on in zip(f, active) if on]
    return max(labels, key=_SEVERITY.__getitem__, default="converges")


@dataclass
class SimulationResult:
    theta: float
    factors: tuple
    classification: str
    iterates: np.ndarray  # (k_max + 1, dim), row 0 is x0
    closed_form: np.ndarray
    step_errors: np.ndarray  # ||x_k - closed_k|| / ||closed_k||, row 0 is 0

    @property
    def max_rel_error(self):
        return float(np.max(self.step_errors))


def simulate(inst, theta, x0, k_max):
    """Run the generic PR step on the instance and compare with factor powers.

    Errors are normwise relative to the closed-form iterate (absolute where
    that iterate is exactly zero).
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.size != inst.dim:
        raise ValueError(f"x0 must have {inst.dim} entries")
    A, B = inst.operators()
    cfg = PRConfig(gamma=inst.gamma, theta=theta, x0=x0,
                   beta=min(inst.beta, inst.beta_bar), max_iter=k_max)
    X = np.empty((k_max + 1, x0.size))
    X[0] = x = x0
    for k in range(1, k_max + 1):
        x = pr_step(A, B, cfg, x, k).x
        X[k] = x
    f1, f2 = iteration_factors(inst, theta)
    n = inst.block_dim
    k = np.arange(k_max + 1)[:, None]
    closed = np.hstack([f1**k * x0[:n], f2**k * x0[n:]])
    err = np.linalg.norm(X - closed, axis=1)
    size = np.linalg.norm(closed, axis=1)
    rel = np.divide(err, size, out=err.copy(), where=size > 0)
    return SimulationResult(theta, (f1, f2), classify(inst, theta, x0), X, closed, rel)


def theta_scan(inst, thetas):
    """Rows ``(theta, f1, f2, threshold, classification)`` over a theta grid."""
    thr = divergence_threshold(inst)
    rows = []
    for t in thetas:
        f1, f2 = iteration_factors(inst, t)
        rows.append(dict(theta=float(t), f1=f1, f2=f2, threshold=thr,
                         classification=classify(inst, t)))
    return rows
