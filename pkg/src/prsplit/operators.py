"""Maximal monotone operators exposed through their resolvents.

Every operator here carries a declared strong-monotonicity modulus and a
resolvent ``J_{gamma T} = (I + gamma T)^{-1}``.  Set-valued operators are
never represented as explicit sets; membership ``t in T(u)`` is decided with
the resolvent fixed-point identity ``J_{gamma T}(u + gamma t) = u``.
"""

import threading

import numpy as np
import scipy.linalg
import scipy.sparse

__all__ = [
    "Operator",
    "ZeroOperator",
    "ScaledIdentity",
    "AffineOperator",
    "WeightedL1Subdifferential",
    "LeastSquaresGradient",
    "SubspaceNormalCone",
    "ShiftedOperator",
    "soft_threshold",
    "resolvent_shifted",
    "resolvent_least_squares",
    "resolvent_weighted_l1",
    "verify_inclusion",
    "INCLUSION_TOL",
]

INCLUSION_TOL = 1e-8


def soft_threshold(x, threshold):
    """Componentwise ``sign(x) * max(|x| - threshold, 0)``."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def _as_vector(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("vector has non-finite entries")
    return x


def _check_gamma(gamma):
    if not gamma > 0:
        raise ValueError(f"resolvent parameter must be positive, got {gamma!r}")


class Operator:
    """A maximal ``modulus``-strongly monotone operator on R^n.

    Subclasses implement :meth:`resolvent` and, when they can,
    :meth:`graph_sample`.  Single-valued operators also implement
    :meth:`point_eval`.
    """

    modulus = 0.0
    single_valued = False

    def resolvent(self, gamma, x):
        raise NotImplementedError

    def point_eval(self, z):
        raise TypeError(f"{type(self).__name__} is set-valued; use verify_inclusion")

    def graph_sample(self, rng, size, dim=None):
        """Return ``(Z, T)`` of shape ``(size, n)`` with ``T[i] in op(Z[i])``."""
        raise NotImplementedError

    def __call__(self, z):
        return self.point_eval(z)


class ZeroOperator(Operator):
    """``T = 0`` on R^dim.  Resolvent is the identity."""

    single_valued = True

    def __init__(self, dim=None):
        self.dim = dim

    def resolvent(self, gamma, x):
        _check_gamma(gamma)
        return np.array(x, dtype=float, copy=True)

    def point_eval(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def graph_sample(self, rng, size, dim=None):
        dim = dim or self.dim
        Z = rng.standard_normal((size, dim))
        return Z, np.zeros_like(Z)


class ScaledIdentity(Operator):
    """``T = c I`` with ``c >= 0``."""

    single_valued = True

    def __init__(self, scale=1.0, dim=None):
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        self.scale = float(scale)
        self.modulus = self.scale
        self.dim = dim

    def resolvent(self, gamma, x):
        _check_gamma(gamma)
        return np.asarray(x, dtype=float) / (1.0 + gamma * self.scale)

    def point_eval(self, z):
        return self.scale * np.asarray(z, dtype=float)

    def graph_sample(self, rng, size, dim=None):
        dim = dim or self.dim
        Z = rng.standard_normal((size, dim))
        return Z, self.scale * Z


class AffineOperator(Operator):
    """``T(z) = M z + q`` with ``sym(M) >= modulus * I``.

    The modulus defaults to the smallest eigenvalue of the symmetric part
    of ``M``.  Resolvent matrices ``(I + gamma M)^{-1}`` are cached per gamma;
    pass ``gammas`` to build them eagerly.
    """

    single_valued = True

    def __init__(self, M, q=None, modulus=None, gammas=()):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        n = M.shape[0]
        if M.shape != (n, n):
            raise ValueError("M must be square")
        self.M = M
        self.q = np.zeros(n) if q is None else _as_vector(q)
        self.dim = n
        lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
        if lam_min < -1e-10 * max(1.0, float(np.max(np.abs(M)))):
            raise ValueError(f"operator is not monotone: lambda_min(sym M) = {lam_min}")
        if modulus is None:
            modulus = max(lam_min, 0.0)
        elif modulus > lam_min + 1e-10 * max(1.0, abs(lam_min)):
            raise ValueError(
                f"declared modulus {modulus} exceeds lambda_min(sym M) = {lam_min}"
            )
        if modulus < 0:
            raise ValueError("operator is not monotone")
        self.modulus = float(modulus)
        self._inverses = {}
        self._lock = threading.Lock()
        for g in gammas:
            self._inverse(g)

    def _inverse(self, gamma):
        inv = self._inverses.get(gamma)
        if inv is None:
            _check_gamma(gamma)
            inv = np.linalg.inv(np.eye(self.dim) + gamma * self.M)
            with self._lock:
                self._inverses[gamma] = inv
        return inv

    def resolvent(self, gamma, x):
        return self._inverse(gamma) @ (x - gamma * self.q)

    def point_eval(self, z):
        return self.M @ z + self.q

    def graph_sample(self, rng, size, dim=None):
        Z = rng.standard_normal((size, self.dim))
        return Z, Z @ self.M.T + self.q


class WeightedL1Subdifferential(Operator):
    r"""``T = \partial \|W \cdot\|_1 + shift I`` for diagonal ``W >= 0``."""

    def __init__(self, weights, shift=0.0):
        w = _as_vector(weights)
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if shift < 0:
            raise ValueError("shift must be nonnegative to keep the operator monotone")
        self.weights = w
        self.shift = float(shift)
        self.modulus = self.shift
        self.dim = w.size

    def resolvent(self, gamma, x):
        return resolvent_weighted_l1(self.weights, self.shift, gamma, x)

    def graph_sample(self, rng, size, dim=None):
        Z = rng.standard_normal((size, self.dim))
        Z[rng.random(Z.shape) < 0.3] = 0.0
        S = np.where(Z != 0, np.sign(Z), rng.uniform(-1.0, 1.0, Z.shape))
        return Z, self.weights * S + self.shift * Z


def _gram(C):
    if scipy.sparse.issparse(C):
        return (C.T @ C).toarray()
    C = np.atleast_2d(np.asarray(C, dtype=float))
    return C.T @ C


class LeastSquaresGradient(Operator):
    """``T(u) = C^T (C u - b) - shift I`` (gradient of ``0.5||Cu - b||^2``).

    ``C`` may be dense or scipy-sparse; the Gram matrix is formed densely.
    Cholesky factors of ``I + gamma (C^T C - shift I)`` are cached per gamma;
    pass ``gammas`` to factor eagerly.
    """

    single_valued = True

    def __init__(self, C, b, shift=0.0, gammas=(), alpha=None):
        self.C = C
        self.b = _as_vector(b)
        self.shift = float(shift)
        self.gram = _gram(C)
        self.ctb = np.asarray(C.T @ self.b).ravel()
        self.dim = self.gram.shape[0]
        if alpha is None:
            alpha = float(np.linalg.eigvalsh(self.gram)[0])
        self.alpha = alpha
        if alpha - self.shift < -1e-12 * max(1.0, abs(alpha)):
            raise ValueError(
                f"shift {self.shift} exceeds lambda_min(C^T C) = {alpha}; not monotone"
            )
        self.modulus = max(alpha - self.shift, 0.0)
        self._factors = {}
        self._lock = threading.Lock()
        for g in gammas:
            self._factor(g)

    def _factor(self, gamma):
        fac = self._factors.get(gamma)
        if fac is None:
            fac = _least_squares_factor(self.gram, self.shift, gamma)
            with self._lock:
                self._factors[gamma] = fac
        return fac

    def resolvent(self, gamma, x):
        return scipy.linalg.cho_solve(self._factor(gamma), x + gamma * self.ctb)

    def point_eval(self, z):
        return self.gram @ z - self.ctb - self.shift * z

    def graph_sample(self, rng, size, dim=None):
        Z = rng.standard_normal((size, self.dim))
        return Z, Z @ self.gram - self.ctb - self.shift * Z


class SubspaceNormalCone(Operator):
    """Normal cone of ``{z : z[mask] = 0}``.

    ``T(z)`` is the set of vectors supported on ``mask`` when ``z[mask] = 0``
    and empty otherwise; the resolvent zeroes the masked coordinates.
    """

    def __init__(self, mask):
        self.mask = np.asarray(mask, dtype=bool)
        self.dim = self.mask.size

    def resolvent(self, gamma, x):
        _check_gamma(gamma)
        out = np.array(x, dtype=float, copy=True)
        out[..., self.mask] = 0.0
        return out

    def graph_sample(self, rng, size, dim=None):
        Z = rng.standard_normal((size, self.dim))
        Z[:, self.mask] = 0.0
        T = np.zeros_like(Z)
        T[:, self.mask] = rng.standard_normal((size, int(self.mask.sum())))
        return Z, T


class ShiftedOperator(Operator):
    """``base + shift I``; the shift may be negative.

    The resolvent goes through :func:`resolvent_shifted` and so only exists
    for ``1 + gamma * shift > 0``.
    """

    def __init__(self, base, shift):
        if base.modulus + shift < 0:
            raise ValueError(
                f"base modulus {base.modulus} + shift {shift} < 0; not monotone"
            )
        self.base = base
        self.shift = float(shift)
        self.modulus = base.modulus + self.shift
        self.single_valued = base.single_valued
        self.dim = getattr(base, "dim", None)

    def resolvent(self, gamma, x):
        return resolvent_shifted(self.base, self.shift, gamma, x)

    def point_eval(self, z):
        return self.base.point_eval(z) + self.shift * np.asarray(z, dtype=float)

    def graph_sample(self, rng, size, dim=None):
        Z, T = self.base.graph_sample(rng, size, dim)
        return Z, T + self.shift * Z


def resolvent_shifted(base, shift, gamma, x):
    """Resolvent of ``base + shift I`` from the resolvent of ``base``.

    Uses ``J_{g(T + sI)}(x) = J_{(g/(1+gs)) T}(x / (1 + gs))``.
    """
    _check_gamma(gamma)
    denom = 1.0 + gamma * shift
    if not denom > 0:
        raise ValueError(f"1 + gamma*shift = {denom} <= 0; resolvent undefined")
    return base.resolvent(gamma / denom, np.asarray(x, dtype=float) / denom)


def _least_squares_factor(gram, shift, gamma):
    _check_gamma(gamma)
    n = gram.shape[0]
    system = np.eye(n) + gamma * (gram - shift * np.eye(n))
    try:
        return scipy.linalg.cho_factor(system, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            f"I + gamma(C^T C - shift I) is not positive definite for "
            f"gamma={gamma}, shift={shift}"
        ) from exc


def resolvent_least_squares(C, b, shift, gamma, x):
    """Solve ``(I + gamma (C^T C - shift I)) u = x + gamma C^T b``.

    This is the resolvent of ``grad f - shift I`` with ``f = 0.5 ||Cu - b||^2``.
    One-off helper; :class:`LeastSquaresGradient` caches the factorization.
    """
    gram = _gram(C)
    fac = _least_squares_factor(gram, shift, gamma)
    rhs = np.asarray(x, dtype=float) + gamma * np.asarray(C.T @ _as_vector(b)).ravel()
    return scipy.linalg.cho_solve(fac, rhs)


def resolvent_weighted_l1(weights, shift, gamma, x):
    r"""Resolvent of ``\partial \|W \cdot\|_1 + shift I`` with ``W = diag(weights)``.

    ``u_i = soft_threshold(x_i / (1 + gamma shift), gamma w_i / (1 + gamma shift))``.
    """
    _check_gamma(gamma)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    denom = 1.0 + gamma * shift
    if not denom > 0:
        raise ValueError(f"1 + gamma*shift = {denom} <= 0; resolvent undefined")
    return soft_threshold(np.asarray(x, dtype=float) / denom, gamma * w / denom)


def verify_inclusion(op, u, t, tol=INCLUSION_TOL, gamma=1.0):
    """Return True iff ``t in op(u)`` up to ``tol``.

    Decided by ``||J_{gamma op}(u + gamma t) - u|| <= tol``, which is exact
    for maximal monotone operators.
    """
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    err = np.linalg.norm(op.resolvent(gamma, u + gamma * t) - u)
    return bool(err <= tol)
