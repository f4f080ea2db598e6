"""Synthetic strongly monotone affine problems with a known solution."""

from dataclasses import dataclass

import numpy as np

from .operators import AffineOperator

__all__ = ["AffineProblem", "affine_problem"]


@dataclass(frozen=True)
class AffineProblem:
    """``A(z) = M_A z + q_A``, ``B(z) = M_B z + q_B`` with ``A(u*) = a* = -B(u*)``."""

    A: AffineOperator
    B: AffineOperator
    u_star: np.ndarray
    a_star: np.ndarray
    beta: float

    @property
    def dim(self):
        return self.u_star.size

    def x_star(self, gamma):
        """The fixed point of the PR map for resolvent parameter ``gamma``."""
        return self.u_star + gamma * self.a_star


def _monotone_matrix(rng, n, beta, skew):
    # rank-deficient PSD part keeps lambda_min(sym M) exactly beta
    G = rng.standard_normal((n, n - 1)) / np.sqrt(n)
    K = rng.standard_normal((n, n)) / np.sqrt(n)
    return beta * np.eye(n) + G @ G.T + skew * (K - K.T)


def affine_problem(rng, n=3, beta=0.5, skew=1.0):
    """Draw a random instance whose operators both have modulus exactly ``beta``.

    ``rng`` is a numpy Generator or a seed.
    """
    rng = np.random.default_rng(rng)
    MA = _monotone_matrix(rng, n, beta, skew)
    MB = _monotone_matrix(rng, n, beta, skew)
    u_star = rng.standard_normal(n)
    a_star = rng.standard_normal(n)
    A = AffineOperator(MA, a_star - MA @ u_star, modulus=beta)
    B = AffineOperator(MB, -a_star - MB @ u_star, modulus=beta)
    return AffineProblem(A, B, u_star, a_star, beta)
