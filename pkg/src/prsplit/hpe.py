"""The PR iteration viewed as an inexact non-Euclidean proximal point method.

Points of the augmented space are ``(3, n)`` arrays ``z = (u, v, x)``.  The
space carries the seminorm ``||z|| = ||x||`` and the degenerate distance
generating function ``w(z) = ||x||^2 / (2 theta)``, whose Bregman distance
only sees the third block.  This module evaluates that geometry and every
rate bound that follows from it, and checks the certificates produced by
:func:`prsplit.splitting.run` against them.
"""

import math
from dataclasses import dataclass

import numpy as np

from .splitting import is_boundary, numerical_tol

__all__ = [
    "QuadSeminormW",
    "HPEParams",
    "GammaSelection",
    "BoundCheck",
    "ErgodicCertificate",
    "augment",
    "apply_L",
    "bregman_identity_errors",
    "chain_bound_slack",
    "augmented_residual",
    "hpe_error_check",
    "pointwise_bound_pr",
    "ergodic_bounds_pr",
    "general_hpe_bounds",
    "ergodic_hpe_certificate",
    "eps_enlargement_check",
    "recommended_gamma",
    "pr_hpe_params",
    "bound_ok",
    "check_pointwise",
    "check_ergodic",
    "check_hpe_equality",
    "check_step_monotone",
    "check_transportation",
    "check_fejer",
    "check_summability",
]

BOUND_REL = 1e-7
BOUND_ABS = 1e-12


def bound_ok(observed, bound):
    """One-sided test ``observed <= bound (1 + 1e-7) + 1e-12`` (vectorized)."""
    return np.asarray(observed) <= np.asarray(bound) * (1.0 + BOUND_REL) + BOUND_ABS


def augment(u, v, x):
    return np.stack([np.atleast_1d(u), np.atleast_1d(v), np.atleast_1d(x)]).astype(float)


class QuadSeminormW:
    """``w(u, v, x) = ||x||^2 / (2 theta)``, in the class with ``m = M = 1/theta``."""

    def __init__(self, theta):
        if not theta > 0:
            raise ValueError("theta must be positive")
        self.theta = float(theta)
        self.m = self.M = 1.0 / self.theta

    @staticmethod
    def seminorm(z):
        return float(np.linalg.norm(np.asarray(z)[2]))

    @staticmethod
    def dual_seminorm(z):
        """Dual of ``||z|| = ||x||``: finite only on ``{(0, 0, y)}``."""
        z = np.asarray(z)
        if np.any(z[0] != 0) or np.any(z[1] != 0):
            return math.inf
        return float(np.linalg.norm(z[2]))

    def value(self, z):
        x = np.asarray(z)[2]
        return float(x @ x) / (2.0 * self.theta)

    def grad(self, z):
        g = np.zeros_like(np.asarray(z, dtype=float))
        g[2] = np.asarray(z)[2] / self.theta
        return g

    def bregman(self, z, zp):
        """``(dw)_z(z') = w(z') - w(z) - <grad w(z), z' - z>``."""
        e = np.asarray(zp)[2] - np.asarray(z)[2]
        return float(e @ e) / (2.0 * self.theta)

    def bregman_grad(self, z, zp):
        """Gradient of ``(dw)_z(.)`` at ``z'``, i.e. ``grad w(z') - grad w(z)``."""
        return self.grad(zp) - self.grad(z)


def bregman_identity_errors(w, z, zp, v):
    """Residuals of the basic Bregman identities at ``z, z'`` with base ``v``.

    Returns a dict; identity entries are absolute errors (ideally 0) and
    inequality entries are slacks ``rhs - lhs`` (must be >= 0):

    ``grad_antisym``   ``grad dw_z(z') = -grad dw_z'(z) = grad w(z') - grad w(z)``
    ``three_point``    ``dw_v(z') - dw_v(z) = <grad dw_v(z), z' - z> + dw_z(z')``
    ``lower``/``upper``  ``m/2 ||z - z'||^2 <= dw_z(z') <= M/2 ||z - z'||^2``
    ``grad_bound``     ``||grad dw_z'(z)||_*^2 <= 2 M^2/m min{dw_z(z'), dw_z'(z)}``
    """
    z, zp, v = (np.asarray(a, dtype=float) for a in (z, zp, v))
    g_fwd = w.bregman_grad(z, zp)
    g_bwd = w.bregman_grad(zp, z)
    g_ref = w.grad(zp) - w.grad(z)
    lhs3 = w.bregman(v, zp) - w.bregman(v, z)
    rhs3 = float(np.sum(w.bregman_grad(v, z) * (zp - z))) + w.bregman(z, zp)
    d = w.bregman(z, zp)
    sq = w.seminorm(z - zp) ** 2
    gb = w.dual_seminorm(w.bregman_grad(zp, z)) ** 2
    return {
        "grad_antisym": float(max(np.max(np.abs(g_fwd + g_bwd)), np.max(np.abs(g_fwd - g_ref)))),
        "three_point": abs(lhs3 - rhs3),
        "lower": d - 0.5 * w.m * sq,
        "upper": 0.5 * w.M * sq - d,
        "grad_bound": 2.0 * w.M**2 / w.m * min(d, w.bregman(zp, z)) - gb,
    }


def chain_bound_slack(w, chain):
    """Slack of ``dw_{z_0}(z_l) <= (l M/m) sum_i min{dw_{z_{i-1}}(z_i), dw_{z_i}(z_{i-1})}``."""
    chain = [np.asarray(c, dtype=float) for c in chain]
    l = len(chain) - 1
    if l < 1:
        raise ValueError("need at least two points")
    steps = sum(min(w.bregman(a, b), w.bregman(b, a)) for a, b in zip(chain, chain[1:]))
    return l * w.M / w.m * steps - w.bregman(chain[0], chain[-1])


def apply_L(theta_tilde, z):
    """Apply the block operator of the augmented inclusion to ``z = (u, v, x)``."""
    u, v, x = np.asarray(z, dtype=float)
    t = theta_tilde
    return np.stack(
        [
            (1.0 - t) * u + t * v - x,
            (t - 2.0) * u + (1.0 - t) * v + x,
            u - v,
        ]
    )


def augmented_residual(s, theta_tilde, gamma):
    """``L(z_tilde_k) + gamma (a_k, b_k, 0)``; equals ``(0, 0, u_k - v_k)``."""
    z_tilde = augment(s.u, s.v, s.x_tilde)
    out = apply_L(theta_tilde, z_tilde)
    out[0] += gamma * s.a
    out[1] += gamma * s.b
    return out


@dataclass(frozen=True)
class BoundCheck:
    observed: float
    bound: float
    ok: bool


def hpe_error_check(s, w, sigma, rel_tol=1e-9):
    """Compare ``(dw)_{z_k}(z_tilde_k)`` with ``sigma (dw)_{z_{k-1}}(z_tilde_k)``.

    For the PR instance these are equal.  The comparison is relative, with a
    floor at the rounding level of the stored iterates (the two distances are
    differences of vectors of size ``||x||``).
    """
    z_prev = augment(s.u, s.v, s.x_prev)
    z_k = augment(s.u, s.v, s.x)
    z_t = augment(s.u, s.v, s.x_tilde)
    lhs = w.bregman(z_k, z_t)
    rhs = sigma * w.bregman(z_prev, z_t)
    return BoundCheck(lhs, rhs, _rel_equal(lhs, rhs, s, w.theta, rel_tol))


def _rel_equal(lhs, rhs, s, theta, rel_tol):
    size = np.linalg.norm(s.x_prev) + np.linalg.norm(s.x) + np.linalg.norm(s.x_tilde)
    rounding = 8.0 * np.finfo(float).eps * size
    floor = (2.0 * math.sqrt(2.0 * theta * max(lhs, rhs)) * rounding + rounding**2) / (2.0 * theta)
    return bool(abs(lhs - rhs) <= rel_tol * max(lhs, rhs) + floor)


def _pointwise_defined(theta, theta_tilde):
    return theta < 2.0 * theta_tilde and not is_boundary(theta, theta_tilde)


def pointwise_bound_pr(k, dist0, theta, theta_tilde):
    """Best-iterate bound ``sqrt(2) d0 / (sqrt(k) sqrt(2 theta_tilde - theta))``.

    Valid for ``theta < 2 theta_tilde``; ``k`` may be an array.
    """
    if not _pointwise_defined(theta, theta_tilde):
        raise ValueError(
            f"pointwise bound undefined: theta={theta} >= 2*theta_tilde={2 * theta_tilde}"
        )
    k = np.asarray(k, dtype=float)
    return math.sqrt(2.0) * dist0 / (np.sqrt(k) * math.sqrt(2.0 * theta_tilde - theta))


def ergodic_bounds_pr(k, dist0, theta, theta_tilde, gamma):
    """Bounds on ``||u_bar - v_bar||`` and ``eps' + eps''`` after ``k`` steps.

    Returns ``(2 d0 / (k theta), 3 (1 + 2 (1 - theta_tilde/theta)^2) d0^2 / (k gamma theta))``.
    """
    k = np.asarray(k, dtype=float)
    res = 2.0 * dist0 / (k * theta)
    c = 1.0 - theta_tilde / theta
    eps = 3.0 * (1.0 + 2.0 * c * c) * dist0**2 / (k * gamma * theta)
    return res, eps


@dataclass(frozen=True)
class HPEParams:
    """Parameters of an inexact proximal point run.

    ``lambdas`` and ``eps`` default to the PR values (all ones, all zeros).
    """

    sigma: float
    m: float
    M: float
    dw0: float
    lambdas: tuple = None
    eps: tuple = None

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")
        if not 0 < self.m <= self.M:
            raise ValueError("need 0 < m <= M")
        if self.dw0 < 0:
            raise ValueError("dw0 must be nonnegative")

    @property
    def tau(self):
        return math.sqrt(2.0) * self.M / math.sqrt(self.m)

    def lam(self, k):
        if self.lambdas is None:
            return np.ones(k)
        lam = np.asarray(self.lambdas[:k], dtype=float)
        if lam.size < k:
            raise ValueError("lambda sequence shorter than k")
        return lam


def pr_hpe_params(theta, theta_tilde, dist0):
    """HPE parameters of a PR run: ``m = M = 1/theta``, ``dw0 = d0^2/(2 theta)``."""
    sigma = (theta / theta_tilde - 1.0) ** 2
    if is_boundary(theta, theta_tilde):
        sigma = 1.0
    return HPEParams(sigma=min(sigma, 1.0), m=1.0 / theta, M=1.0 / theta,
                     dw0=dist0**2 / (2.0 * theta))


def general_hpe_bounds(p, k, alpha=2):
    """Per-index residual and epsilon bounds after ``k`` steps.

    For index ``i <= k``::

        r_i   = tau (1 + sqrt(sigma)) sqrt(dw0 / (1 - sigma) * lam_i^(alpha-2) / S)
        eps_i = sigma dw0 / (1 - sigma) * lam_i^(alpha-1) / S

    with ``S = sum_{j <= k} lam_j^alpha``.  Some index ``i <= k`` meets both.
    The ``(1 + sqrt(sigma))`` factor is the conservative one; a
    ``(1 + sigma)`` factor would be smaller for ``0 < sigma < 1``.
    """
    if not p.sigma < 1.0:
        raise ValueError("bounds require sigma < 1")
    if alpha not in (1, 2):
        raise ValueError("alpha must be 1 or 2")
    lam = p.lam(k)
    S = np.sum(lam**alpha)
    base = p.dw0 / (1.0 - p.sigma)
    r = p.tau * (1.0 + math.sqrt(p.sigma)) * np.sqrt(base * lam ** (alpha - 2) / S)
    e = p.sigma * base * lam ** (alpha - 1) / S
    return r, e


@dataclass(frozen=True)
class ErgodicCertificate:
    k: int
    r_a_norm: float
    eps_a: float
    rho: float
    r_bound: float
    eps_bound: float
    rho_bound: float  # nan when sigma == 1
    ok: bool


def ergodic_hpe_certificate(trace, p, k):
    """Check the ergodic residual pair of the augmented inclusion at step ``k``.

    With unit weights ``r^a_k = (0, 0, u_bar - v_bar)`` and ``eps^a_k`` is the
    traced ``eps_aug``; ``rho_k = max_{i<=k} (dw)_{z_i}(z_tilde_i)``.
    """
    lam = p.lam(k)
    Lambda = float(np.sum(lam))
    r_a = float(trace["ergodic_residual_norm"][k - 1])
    eps_a = float(trace["eps_aug"][k - 1])
    rho = float(np.max(trace["dw_current"][:k]))
    r_bound = 2.0 * p.tau * math.sqrt(p.dw0) / Lambda
    eps_bound = (3.0 * p.M / p.m) * (2.0 * p.dw0 + rho) / Lambda
    ok = bool(bound_ok(r_a, r_bound)) and bool(bound_ok(eps_a, eps_bound))
    ok = ok and eps_a >= -numerical_tol(trace["eps_scale"][k - 1])
    rho_bound = math.nan
    if p.sigma < 1.0:
        rho_bound = p.sigma * p.dw0 / (1.0 - p.sigma)
        ok = ok and bool(bound_ok(rho, rho_bound))
    return ErgodicCertificate(k, r_a, eps_a, rho, r_bound, eps_bound, rho_bound, ok)


def eps_enlargement_check(op, z, t, eps, samples=None, *, rng=None, size=200, tol=None):
    """Necessary test for ``t in op^[eps](z)`` against sampled graph points.

    ``samples`` is a pair ``(Z, T)`` of graph points of ``op``; when omitted,
    ``size`` points are drawn from ``op.graph_sample``.  Returns False iff
    some sample gives ``<t - t', z - z'> < -eps - tol``.  Sampling can refute
    membership but never prove it.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if samples is None:
        rng = np.random.default_rng(rng)
        # centre the samples on z so they probe its neighbourhood
        Zs, Ts = op.graph_sample(rng, size, z.size)
        if op.single_valued:
            Zs = Zs + z
            Ts = np.array([op.point_eval(p) for p in Zs])
    else:
        Zs, Ts = samples
    Zs = np.atleast_2d(Zs)
    Ts = np.atleast_2d(Ts)
    inner = np.einsum("ij,ij->i", np.asarray(t) - Ts, z - Zs)
    if tol is None:
        tol = numerical_tol(float(np.max(np.abs(inner), initial=0.0)))
    return bool(np.all(inner >= -eps - tol))


@dataclass(frozen=True)
class GammaSelection:
    """``D0`` bounds the distance from ``x0`` to the solution set; ``S`` bounds
    the size of the dual certificates ``a* in A(u*) and -B(u*)``."""

    D0: float
    S: float


def recommended_gamma(sel):
    if not sel.S > 0:
        raise ValueError("S must be positive")
    if not sel.D0 > 0:
        raise ValueError("D0 must be positive")
    return sel.D0 / sel.S


# --- trace-level checks ------------------------------------------------------
# Each returns (worst_margin, ok); the margin is observed/bound where a bound
# exists, and the worst violation otherwise.


def check_pointwise(trace, dist0, theta, theta_tilde):
    """Best-iterate residual against the pointwise bound at every k."""
    best = np.minimum.accumulate(trace["residual_norm"])
    bound = pointwise_bound_pr(trace.k, dist0, theta, theta_tilde)
    ok = bound_ok(best, bound)
    return _ratio(best, bound), bool(np.all(ok))


def check_ergodic(trace, dist0, theta, theta_tilde, gamma):
    res_b, eps_b = ergodic_bounds_pr(trace.k, dist0, theta, theta_tilde, gamma)
    res = trace["ergodic_residual_norm"]
    eps = trace["eps_prime"] + trace["eps_double_prime"]
    ok = np.all(bound_ok(res, res_b)) and np.all(bound_ok(eps, eps_b))
    return max(_ratio(res, res_b), _ratio(eps, eps_b)), bool(ok)


def check_hpe_equality(states, theta, sigma, rel_tol=1e-9):
    w = QuadSeminormW(theta)
    worst = 0.0
    ok = True
    for s in states:
        c = hpe_error_check(s, w, sigma, rel_tol)
        ok &= c.ok
        if max(c.observed, c.bound) > 0:
            worst = max(worst, abs(c.observed - c.bound) / max(c.observed, c.bound))
    return worst, ok


def check_step_monotone(trace, slack=1e-12):
    dx = trace["delta_x_norm"]
    inc = np.diff(dx)
    worst = float(np.max(inc, initial=-np.inf))
    return worst, bool(np.all(inc <= slack))


def check_transportation(trace):
    tol = numerical_tol(trace["eps_scale"])
    worst = float(np.min(np.minimum(trace["eps_prime"], trace["eps_double_prime"]) + tol))
    return worst, bool(worst >= 0)


def check_fejer(trace, slack=1e-12):
    d = trace["dist_to_solution"]
    inc = np.diff(d)
    worst = float(np.max(inc, initial=-np.inf))
    return worst, bool(np.all(inc <= slack * (1.0 + d[:-1])))


def check_summability(trace, dist0, theta, sigma):
    """``(1 - sigma) sum_i (dw)_{z_{i-1}}(z_tilde_i) <= (dw)_{z_0}(z*)``."""
    lhs = (1.0 - sigma) * np.cumsum(trace["dw_previous"])
    rhs = dist0**2 / (2.0 * theta)
    return _ratio(lhs, np.full_like(lhs, rhs)), bool(np.all(bound_ok(lhs, rhs)))


def _ratio(obs, bound):
    obs = np.asarray(obs, dtype=float)
    bound = np.asarray(bound, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(bound > 0, obs / bound, np.where(obs > 0, np.inf, 0.0))
    return float(np.max(r, initial=0.0))
