"""Weighted Lasso benchmark: ``min 0.5||Cu - b||^2 + ||Wu||_1``.

The objective is split as ``A = grad f - alpha' I`` and
``B = d||W.||_1 + alpha' I`` (or the reverse, partition ``"gf"``), which moves
strong monotonicity from the smooth term to the nonsmooth one as ``alpha'``
goes from 0 to ``alpha = lambda_min(C^T C)``.

Instances are drawn from ``numpy.random.default_rng(seed)`` in a fixed order:
the 10 column positions of every row of ``C``, the nonzero values of ``C``
(row-major), ``b``, then the diagonal of ``W``.  Instance ``i`` of an
experiment uses seed ``base_seed + i``.
"""

import ast
import json
import math
import operator as _op
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse

from .operators import LeastSquaresGradient, WeightedL1Subdifferential
from .splitting import PRConfig, run

__all__ = [
    "LassoInstance",
    "generate_instance",
    "spectral_bounds",
    "lasso_operators",
    "solve_lasso",
    "optimality_residual",
    "reference_solution",
    "ExperimentConfig",
    "ResultRow",
    "RunRecord",
    "run_table",
    "run_sweep",
    "evaluate_expr",
    "CSV_FIELDS",
    "TABLE_THETAS",
    "TABLE_CELLS",
    "SWEEP_GRID",
    "summaries_json",
    "l1_iterate",
]

N_ROWS, N_COLS, NNZ_PER_ROW = 300, 200, 10
TABLE_THETAS = ("1", "1.25", "1.5", "1.75", "2", "2 + gamma*alpha/2")
TABLE_CELLS = (("1", "0"), ("1", "alpha/2"),
               ("1/sqrt(alpha*kappa)", "0"), ("1/sqrt(alpha*kappa)", "alpha/2"))
CSV_FIELDS = ("theta", "gamma", "alpha_prime", "partition", "instance_seed",
              "iterations", "censored", "final_residual")


@dataclass(frozen=True, eq=False)
class LassoInstance:
    C: scipy.sparse.csr_matrix
    b: np.ndarray
    weights: np.ndarray  # diagonal of W
    alpha: float
    kappa: float
    seed: int
    retries: int = 0  # extra draws needed to get alpha > 0

    @property
    def gram(self):
        return (self.C.T @ self.C).toarray()


def spectral_bounds(C):
    """``(lambda_min, lambda_max)`` of ``C^T C`` from a dense symmetric eigensolve."""
    if scipy.sparse.issparse(C):
        G = (C.T @ C).toarray()
    else:
        C = np.atleast_2d(np.asarray(C, dtype=float))
        G = C.T @ C
    if not np.any(G):
        raise ValueError("C is zero")
    ev = np.linalg.eigvalsh(G)
    return float(ev[0]), float(ev[-1])


def _draw(rng, m=N_ROWS, n=N_COLS, per_row=NNZ_PER_ROW):
    cols = np.argsort(rng.random((m, n)), axis=1)[:, :per_row]
    cols.sort(axis=1)
    vals = rng.standard_normal((m, per_row))
    C = scipy.sparse.csr_matrix(
        (vals.ravel(), cols.ravel(), np.arange(0, m * per_row + 1, per_row)), shape=(m, n)
    )
    b = rng.standard_normal(m)
    w = rng.random(n)
    return C, b, w


def generate_instance(seed, max_retries=10, rank_tol=1e-10):
    """Draw a 300 x 200 instance with exactly 10 nonzeros per row of ``C``.

    If ``lambda_min(C^T C) <= rank_tol * lambda_max`` the draw is repeated
    with seed ``seed + 1000003 * r`` (``r = 1, 2, ...``); the retry count is
    kept on the instance.
    """
    for r in range(max_retries + 1):
        rng = np.random.default_rng(seed + 1000003 * r)
        C, b, w = _draw(rng)
        alpha, kappa = spectral_bounds(C)
        if alpha > rank_tol * kappa:
            return LassoInstance(C, b, w, alpha, kappa, seed, r)
    raise RuntimeError(f"no full-rank instance for seed {seed} after {max_retries} retries")


def lasso_operators(inst, alpha_prime, partition="fg", gammas=()):
    """``(A, B)`` for the given split; ``partition="gf"`` swaps the roles."""
    if not 0.0 <= alpha_prime <= inst.alpha * (1.0 + 1e-12):
        raise ValueError(f"alpha' = {alpha_prime} outside [0, alpha = {inst.alpha}]")
    alpha_prime = min(alpha_prime, inst.alpha)
    f_side = LeastSquaresGradient(inst.C, inst.b, alpha_prime, gammas, alpha=inst.alpha)
    g_side = WeightedL1Subdifferential(inst.weights, alpha_prime)
    if partition == "fg":
        return f_side, g_side
    if partition == "gf":
        return g_side, f_side
    raise ValueError(f"partition must be 'fg' or 'gf', got {partition!r}")


def optimality_residual(inst, u):
    """Distance from ``-C^T(Cu - b)`` to ``W d||u||_1`` (0 iff ``u`` is optimal)."""
    g = inst.C.T @ (inst.C @ u - inst.b)
    w = inst.weights
    on = u != 0
    r = np.where(on, g + w * np.sign(u), np.maximum(np.abs(g) - w, 0.0))
    return float(np.linalg.norm(r))


def l1_iterate(state, partition):
    # the iterate produced by the soft-threshold resolvent is exactly sparse
    return state.v if partition == "fg" else state.u


def solve_lasso(inst, theta, gamma, alpha_prime, partition="fg", tol=1e-5,
                max_iter=500, x0=None, **run_kw):
    """Relaxed PR on the split weighted Lasso; returns the ``SolveResult``.

    ``beta = min(alpha - alpha', alpha')`` is the common modulus.
    """
    A, B = lasso_operators(inst, alpha_prime, partition, gammas=(gamma,))
    beta = min(A.modulus, B.modulus)
    x0 = np.zeros(inst.C.shape[1]) if x0 is None else x0
    cfg = PRConfig(gamma=gamma, theta=theta, x0=x0, beta=beta, tol=tol, max_iter=max_iter)
    return run(A, B, cfg, **run_kw)


def reference_solution(inst, tol=1e-12, max_iter=200000):
    """High-accuracy minimizer from Douglas-Rachford with ``gamma = 1/sqrt(alpha kappa)``."""
    gamma = 1.0 / math.sqrt(inst.alpha * inst.kappa)
    res = solve_lasso(inst, 1.0, gamma, 0.0, tol=tol, max_iter=max_iter, record=False)
    return l1_iterate(res.state, "fg")


# --- symbolic parameters -----------------------------------------------------

_BINOPS = {ast.Add: _op.add, ast.Sub: _op.sub, ast.Mult: _op.mul,
           ast.Div: _op.truediv, ast.Pow: _op.pow}
_FUNCS = {"sqrt": math.sqrt}


def evaluate_expr(expr, **names):
    """Evaluate an arithmetic expression such as ``"1/sqrt(alpha*kappa)"``.

    Numbers, ``+ - * / **``, ``sqrt`` and the given names are allowed.
    """
    if isinstance(expr, (int, float)):
        return float(expr)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in names:
            return float(names[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = ev(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ValueError(f"unsupported expression {expr!r}")

    try:
        tree = ast.parse(str(expr).strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {expr!r}") from exc
    return ev(tree)


# --- experiments -------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """A grid of ``(theta, gamma, alpha')`` cells over seeded instances.

    ``thetas`` and ``cells`` hold expressions in ``alpha``, ``kappa`` (and
    ``gamma`` for theta) evaluated per instance.
    """

    thetas: tuple = TABLE_THETAS
    cells: tuple = TABLE_CELLS
    partition: str = "fg"
    tol: float = 1e-5
    max_iter: int = 500
    instances: int = 20
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.partition not in ("fg", "gf"):
            raise ValueError("partition must be 'fg' or 'gf'")
        if self.instances < 1 or self.max_iter < 1 or not self.tol > 0:
            raise ValueError("instances, max_iter and tol must be positive")
        # catch typos before any solve
        for t in self.thetas:
            evaluate_expr(t, alpha=1.0, kappa=1.0, gamma=1.0)
        for g, a in self.cells:
            evaluate_expr(g, alpha=1.0, kappa=1.0)
            evaluate_expr(a, alpha=1.0, kappa=1.0)


@dataclass(frozen=True)
class RunRecord:
    theta: float
    gamma: float
    alpha_prime: float
    partition: str
    instance_seed: int
    iterations: int
    censored: bool
    final_residual: float
    # symbolic labels of the cell, for grouping across instances
    theta_label: str = ""
    gamma_label: str = ""
    alpha_prime_label: str = ""

    def csv_row(self):
        d = asdict(self)
        return [d[k] for k in CSV_FIELDS]


@dataclass
class ResultRow:
    theta_label: str
    gamma_label: str
    alpha_prime_label: str
    iterations: list = field(default_factory=list)
    censored: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    max_iter: int = 500

    @property
    def mean_iterations(self):
        return float(np.mean(self.iterations))

    @property
    def censored_count(self):
        return int(sum(self.censored))

    def summary(self):
        """Cell summary; the mean is shown as ``> max_iter`` once most runs are censored."""
        mean = self.mean_iterations
        shown = f"> {self.max_iter}" if self.censored_count * 2 > len(self.iterations) else round(mean, 2)
        return dict(theta=self.theta_label, gamma=self.gamma_label,
                    alpha_prime=self.alpha_prime_label, instances=len(self.iterations),
                    mean_iterations=mean, censored=self.censored_count, reported=shown)


def _cell_values(inst, theta_expr, gamma_expr, ap_expr):
    names = dict(alpha=inst.alpha, kappa=inst.kappa)
    gamma = evaluate_expr(gamma_expr, **names)
    ap = evaluate_expr(ap_expr, **names)
    theta = evaluate_expr(theta_expr, gamma=gamma, **names)
    return theta, gamma, ap


def _solve_instance(args):
    cfg, seed, jobs = args
    inst = generate_instance(seed)
    out = []
    for theta_expr, gamma_expr, ap_expr in jobs:
        theta, gamma, ap = _cell_values(inst, theta_expr, gamma_expr, ap_expr)
        res = solve_lasso(inst, theta, gamma, ap, cfg.partition, cfg.tol, cfg.max_iter,
                          record=False)
        final = res.state.dx_norm if res.state is not None else math.nan
        out.append(RunRecord(theta, gamma, ap, cfg.partition, seed, res.iterations,
                             not res.converged, final,
                             str(theta_expr), str(gamma_expr), str(ap_expr)))
    return out


def _map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _collect(cfg, jobs):
    seeds = [cfg.base_seed + i for i in range(cfg.instances)]
    per_instance = _map(_solve_instance, [(cfg, s, jobs) for s in seeds], cfg.workers)
    records = [r for recs in per_instance for r in recs]
    order = {j: i for i, j in enumerate(jobs)}
    records.sort(key=lambda r: (order[(r.theta_label, r.gamma_label, r.alpha_prime_label)],
                                r.instance_seed))
    return records


def run_table(cfg):
    """Solve every ``(theta, gamma, alpha')`` cell on every instance.

    Returns ``(rows, records)``: one aggregated :class:`ResultRow` per cell and
    the per-run records, both in grid order.
    """
    jobs = [(t, g, a) for t in cfg.thetas for g, a in cfg.cells]
    records = _collect(cfg, jobs)
    return _aggregate(records, jobs, cfg.max_iter), records


def _aggregate(records, jobs, max_iter):
    rows = {j: ResultRow(*j, max_iter=max_iter) for j in jobs}
    for r in records:
        row = rows[(r.theta_label, r.gamma_label, r.alpha_prime_label)]
        # censored runs count at the cap whatever stopped them
        row.iterations.append(max_iter if r.censored else r.iterations)
        row.censored.append(r.censored)
        row.seeds.append(r.instance_seed)
    return [rows[j] for j in jobs]


SWEEP_GRID = ("0", "alpha/4", "alpha/2", "3*alpha/4", "alpha")


def run_sweep(cfg, theta="2", gamma="1", alpha_primes=SWEEP_GRID):
    """Iteration counts over an ``alpha'`` grid at fixed ``(theta, gamma)``.

    Returns per-run records in ``(alpha', seed)`` order.
    """
    jobs = [(str(theta), str(gamma), str(a)) for a in alpha_primes]
    return _collect(cfg, jobs)


def summaries_json(rows):
    return json.dumps([r.summary() for r in rows], indent=2)
