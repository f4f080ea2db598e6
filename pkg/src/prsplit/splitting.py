"""Relaxed Peaceman-Rachford splitting with residual certificates.

One step from ``x_prev``::

    u = J_{gA}(x_prev)
    v = J_{gB}(2u - x_prev)
    x = x_prev + theta (v - u)

together with the certificate pair ``g a = x_prev - u``,
``g b = 2u - v - x_prev`` (so ``a in A(u)``, ``b in B(v)`` and
``u - v = g (a + b)``) and the auxiliary point
``x_tilde = x_prev + theta_tilde (v - u)``.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .operators import verify_inclusion

__all__ = [
    "Regime",
    "RegimeInfo",
    "PRConfig",
    "PRState",
    "ErgodicAccumulator",
    "Trace",
    "SolveResult",
    "regime",
    "pr_step",
    "run",
    "common_modulus",
    "solution_point",
    "numerical_tol",
    "is_boundary",
]

_REL_EQ = 1e-12


def numerical_tol(scale):
    """Sign tolerance for quantities proven nonnegative."""
    return 1e-9 * (1.0 + scale)


def is_boundary(theta, theta0):
    """True when ``theta`` equals ``2 theta0`` up to rounding."""
    return math.isclose(theta, 2.0 * theta0, rel_tol=_REL_EQ, abs_tol=0.0)


class Regime(enum.Enum):
    INTERIOR = "pointwise+ergodic"
    BOUNDARY = "ergodic-only boundary"
    UNCERTIFIED = "uncertified"


@dataclass(frozen=True)
class RegimeInfo:
    kind: Regime
    theta0: float
    theta_tilde: float
    sigma: float


def regime(gamma, theta, beta):
    """Classify ``theta`` against ``theta0 = 1 + gamma beta / 2``.

    Returns the regime with ``theta0``, ``theta_tilde = min(theta, theta0)``
    and ``sigma = (theta/theta_tilde - 1)^2``.
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta!r}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    theta0 = 1.0 + gamma * beta / 2.0
    theta_tilde = min(theta, theta0)
    sigma = (theta / theta_tilde - 1.0) ** 2
    if is_boundary(theta, theta0):
        kind = Regime.BOUNDARY
    elif theta < 2.0 * theta0:
        kind = Regime.INTERIOR
    else:
        kind = Regime.UNCERTIFIED
    return RegimeInfo(kind, theta0, theta_tilde, sigma)


def common_modulus(A, B):
    """The modulus used for certification: ``min`` of the two declared moduli."""
    return min(A.modulus, B.modulus)


@dataclass(frozen=True)
class PRConfig:
    """Parameters of one relaxed PR solve.

    ``beta`` is the common strong-monotonicity modulus of A and B.  The solve
    stops when ``||x_k - x_{k-1}|| <= tol`` or after ``max_iter`` steps, and
    gives up once ``||x_k|| >= overflow``.
    """

    gamma: float
    theta: float
    x0: np.ndarray
    beta: float = 0.0
    tol: float = 1e-5
    max_iter: int = 1000
    overflow: float = 1e12

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        if not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 has non-finite entries")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be a positive integer")
        object.__setattr__(self, "max_iter", int(self.max_iter))
        # validates gamma, theta, beta
        regime(self.gamma, self.theta, self.beta)

    @property
    def info(self):
        return regime(self.gamma, self.theta, self.beta)

    @property
    def theta0(self):
        return self.info.theta0

    @property
    def theta_tilde(self):
        return self.info.theta_tilde

    @property
    def sigma(self):
        return self.info.sigma


@dataclass(frozen=True)
class PRState:
    k: int
    x_prev: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    b: np.ndarray
    x_tilde: np.ndarray
    r_norm: float

    @property
    def dx_norm(self):
        return float(np.linalg.norm(self.x - self.x_prev))


def pr_step(A, B, cfg, x_prev, k=1):
    """Advance one relaxed PR step from ``x_prev`` and return the full state."""
    g = cfg.gamma
    u = A.resolvent(g, x_prev)
    v = B.resolvent(g, 2.0 * u - x_prev)
    d = v - u
    x = x_prev + cfg.theta * d
    x_tilde = x_prev + cfg.theta_tilde * d
    a = (x_prev - u) / g
    b = (2.0 * u - v - x_prev) / g
    return PRState(k, x_prev, x, u, v, a, b, x_tilde, math.sqrt(d @ d))


class ErgodicAccumulator:
    """Running averages and co-moments of the PR iterates.

    Tracks the means of ``u, v, a, b, x_tilde`` and the centred co-moments
    ``sum <a_i, u_i - mean u>``, ``sum <u_i, u_i - mean u>`` (and the v/b
    analogues, and ``sum <u_i - v_i, x_tilde_i - mean x_tilde>``) with a
    Welford-style update, so every ergodic quantity is O(1) per step and no
    history is stored.
    """

    # row order of the stacked means
    _U, _V, _A, _B, _XT = range(5)

    def __init__(self, dim, beta=0.0):
        self.beta = float(beta)
        self.k = 0
        self.means = np.zeros((5, dim))
        self.co_au = 0.0
        self.co_uu = 0.0
        self.co_bv = 0.0
        self.co_vv = 0.0
        self.co_rx = 0.0

    def update(self, s):
        self.k += 1
        P = np.stack((s.u, s.v, s.a, s.b, s.x_tilde))
        delta = P - self.means
        self.means += delta / self.k
        M = delta @ (P - self.means).T
        self.co_au += M[2, 0]
        self.co_uu += M[0, 0]
        self.co_bv += M[3, 1]
        self.co_vv += M[1, 1]
        self.co_rx += M[0, 4] - M[1, 4]
        return self

    @property
    def u_bar(self):
        return self.means[self._U]

    @property
    def v_bar(self):
        return self.means[self._V]

    @property
    def a_bar(self):
        return self.means[self._A]

    @property
    def b_bar(self):
        return self.means[self._B]

    @property
    def x_tilde_bar(self):
        return self.means[self._XT]

    @property
    def eps_prime(self):
        """``(1/k) sum <a_i - beta u_i, u_i - u_bar>``."""
        return (self.co_au - self.beta * self.co_uu) / self.k

    @property
    def eps_double_prime(self):
        """``(1/k) sum <b_i - beta v_i, v_i - v_bar>``."""
        return (self.co_bv - self.beta * self.co_vv) / self.k

    @property
    def eps_aug(self):
        """Ergodic residual of the augmented inclusion with unit prox weights."""
        return self.co_rx / self.k

    @property
    def residual_norm(self):
        d = self.u_bar - self.v_bar
        return math.sqrt(d @ d)

    def scale(self):
        """Magnitude used for the sign tolerance on ``eps_prime`` etc."""
        return float(np.max(np.sum(self.means**2, axis=1)))


TRACE_FIELDS = (
    "delta_x_norm",
    "residual_norm",
    "eps_prime",
    "eps_double_prime",
    "ergodic_residual_norm",
    "eps_aug",
    "dw_current",
    "dw_previous",
    "eps_scale",
)
DIAGNOSTIC_FIELDS = (
    "step_comparison_slack",
    "step_comparison_scale",
    "inclusion_a",
    "inclusion_b",
    "augmented_residual",
)


@dataclass
class Trace:
    """Per-iteration records, one array per field, index ``k - 1``.

    ``dw_current`` is ``||x_tilde_k - x_k||^2 / (2 theta)`` and ``dw_previous``
    is ``||x_tilde_k - x_{k-1}||^2 / (2 theta)``.
    """

    theta: float
    gamma: float
    beta: float
    columns: dict = field(default_factory=dict)

    def __len__(self):
        col = self.columns.get("delta_x_norm")
        return 0 if col is None else len(col)

    def __getitem__(self, name):
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    @property
    def k(self):
        return np.arange(1, len(self) + 1)

    def records(self, names=None):
        names = list(names or self.columns)
        cols = [self.columns[n] for n in names]
        return [
            dict(k=i + 1, **{n: float(c[i]) for n, c in zip(names, cols)})
            for i in range(len(self))
        ]


@dataclass
class SolveResult:
    state: PRState
    iterations: int
    reason: str  # "tolerance" | "max_iter" | "divergence_guard"
    trace: Trace
    accumulator: ErgodicAccumulator
    violations: list = field(default_factory=list)

    @property
    def converged(self):
        return self.reason == "tolerance"


def _step_comparison_terms(dx_prev, du, dv, gamma, beta):
    lhs = dx_prev @ (du - dv) + 2.0 * (du @ dv)
    rhs = (1.0 + gamma * beta) * (du @ du + dv @ dv)
    scale = abs(dx_prev @ (du - dv)) + 2.0 * abs(du @ dv) + rhs
    return lhs - rhs, scale


def run(A, B, cfg, *, diagnostics=False, x_star=None, record=True, inclusion_tol=None):
    """Iterate relaxed PR from ``cfg.x0``.

    Parameters
    ----------
    A, B : Operator
    cfg : PRConfig
    diagnostics : bool
        Also record the inclusion certificates ``a_k in A(u_k)``,
        ``b_k in B(v_k)``, the augmented residual and the step-comparison
        inequality behind the monotonicity of ``||x_k - x_{k-1}||``;
        failures are collected in ``SolveResult.violations``.
    x_star : array, optional
        A known fixed point; records ``||x_k - x_star||``.
    record : bool
        Keep the per-iteration trace (the accumulator is always kept).

    Returns
    -------
    SolveResult
    """
    gamma, theta = cfg.gamma, cfg.theta
    info = cfg.info
    two_theta = 2.0 * theta
    acc = ErgodicAccumulator(cfg.x0.size, cfg.beta)
    cols = {name: [] for name in TRACE_FIELDS} if record else None
    if record and diagnostics:
        cols.update({name: [] for name in DIAGNOSTIC_FIELDS})
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=float)
        if record:
            cols.setdefault("dist_to_solution", [])
    violations = []
    tol_incl = inclusion_tol
    certified = info.kind is not Regime.UNCERTIFIED

    x_prev = cfg.x0
    prev = None
    reason = "max_iter"
    state = None
    for k in range(1, cfg.max_iter + 1):
        state = pr_step(A, B, cfg, x_prev, k)
        acc.update(state)
        dx = state.x - x_prev
        dx_norm = math.sqrt(dx @ dx)
        if record:
            e_cur = state.x_tilde - state.x
            e_prev = state.x_tilde - x_prev
            cols["delta_x_norm"].append(dx_norm)
            cols["residual_norm"].append(state.r_norm)
            cols["eps_prime"].append(acc.eps_prime)
            cols["eps_double_prime"].append(acc.eps_double_prime)
            cols["ergodic_residual_norm"].append(acc.residual_norm)
            cols["eps_aug"].append(acc.eps_aug)
            cols["dw_current"].append((e_cur @ e_cur) / two_theta)
            cols["dw_previous"].append((e_prev @ e_prev) / two_theta)
            cols["eps_scale"].append(acc.scale())
            if x_star is not None:
                e = state.x - x_star
                cols["dist_to_solution"].append(math.sqrt(e @ e))
        if diagnostics:
            _diagnose(A, B, cfg, state, prev, cols, violations, tol_incl, certified)
        prev = state
        x_prev = state.x
        if dx_norm <= cfg.tol:
            reason = "tolerance"
            break
        xn = math.sqrt(state.x @ state.x)
        if not math.isfinite(xn) or xn >= cfg.overflow:
            reason = "divergence_guard"
            break

    trace = Trace(theta, gamma, cfg.beta)
    if record:
        trace.columns = {name: np.asarray(vals, dtype=float) for name, vals in cols.items()}
    return SolveResult(state, state.k, reason, trace, acc, violations)


def _diagnose(A, B, cfg, s, prev, cols, violations, tol_incl, certified):
    from .hpe import augmented_residual

    gamma = cfg.gamma
    scale_u = 1.0 + np.linalg.norm(s.u) + gamma * np.linalg.norm(s.a)
    scale_v = 1.0 + np.linalg.norm(s.v) + gamma * np.linalg.norm(s.b)
    err_a = np.linalg.norm(A.resolvent(gamma, s.u + gamma * s.a) - s.u)
    err_b = np.linalg.norm(B.resolvent(gamma, s.v + gamma * s.b) - s.v)
    tol = 1e-8 if tol_incl is None else tol_incl
    if err_a > tol * scale_u:
        violations.append((s.k, "inclusion_a", err_a, tol * scale_u))
    if err_b > tol * scale_v:
        violations.append((s.k, "inclusion_b", err_b, tol * scale_v))
    res = augmented_residual(s, cfg.theta_tilde, gamma)
    aug = max(np.linalg.norm(res[0]), np.linalg.norm(res[1]), np.linalg.norm(res[2] - (s.u - s.v)))
    aug_scale = 1.0 + np.linalg.norm(s.x_prev) + np.linalg.norm(s.u) + np.linalg.norm(s.v)
    if aug > 1e-10 * aug_scale:
        violations.append((s.k, "augmented_residual", aug, 1e-10 * aug_scale))
    slack, cmp_scale = np.nan, np.nan
    if prev is not None:
        slack, cmp_scale = _step_comparison_terms(
            s.x_prev - prev.x_prev, s.u - prev.u, s.v - prev.v, gamma, cfg.beta
        )
        if slack < -numerical_tol(cmp_scale):
            violations.append((s.k, "step_comparison", slack, -numerical_tol(cmp_scale)))
        if certified:
            dx = np.linalg.norm(s.x - s.x_prev)
            dx_prev = np.linalg.norm(prev.x - prev.x_prev)
            if dx > dx_prev + 1e-12:
                violations.append((s.k, "step_monotonicity", dx, dx_prev))
    if cols is not None:
        cols["step_comparison_slack"].append(slack)
        cols["step_comparison_scale"].append(cmp_scale)
        cols["inclusion_a"].append(err_a)
        cols["inclusion_b"].append(err_b)
        cols["augmented_residual"].append(aug)


def solution_point(A, B, x, gamma, tol=1e-6):
    """Characterize ``x`` as a fixed point of the augmented system.

    Returns ``(u, a, ok)`` with ``u = J_{gA}(x)``, ``a = (x - u)/g`` and ``ok``
    true iff ``a in A(u)`` and ``-a in B(u)`` within ``tol``.
    """
    u = A.resolvent(gamma, x)
    a = (np.asarray(x, dtype=float) - u) / gamma
    ok = verify_inclusion(A, u, a, tol, gamma) and verify_inclusion(B, u, -a, tol, gamma)
    return u, a, ok
