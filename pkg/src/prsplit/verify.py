"""Seeded invariant battery over synthetic and closed-form instances.

Every check returns a :class:`Check` with the worst observed value, the
value it is compared against and a verdict.  ``mutate=True`` flips the sign
of the B-side certificate ``b_k`` before the checks see it; the augmented
residual check must then fail, which shows the battery has teeth.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import hpe
from .counterexample import DivergenceInstance, divergence_threshold, simulate
from .problems import affine_problem
from .splitting import PRConfig, Regime, pr_step, run

__all__ = ["Check", "run_battery", "failures"]

IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class Check:
    name: str
    observed: float
    bound: float
    ok: bool
    note: str = ""

    def as_dict(self):
        return dataclasses.asdict(self)


def failures(checks):
    return [c for c in checks if not c.ok]


def _states(A, B, cfg, k_max, mutate):
    out = []
    x = cfg.x0
    for k in range(1, k_max + 1):
        s = pr_step(A, B, cfg, x, k)
        if mutate:
            s = dataclasses.replace(s, b=-s.b)
        out.append(s)
        x = s.x
    return out


def _bregman_checks(rng, n_samples, dim=3):
    worst = {}
    chain_worst = math.inf
    for _ in range(n_samples):
        w = hpe.QuadSeminormW(rng.uniform(0.2, 4.0))
        z, zp, v = (rng.standard_normal((3, dim)) for _ in range(3))
        for key, val in hpe.bregman_identity_errors(w, z, zp, v).items():
            worst[key] = max(worst.get(key, -math.inf), val) if key in ("grad_antisym", "three_point") \
                else min(worst.get(key, math.inf), val)
        chain = rng.standard_normal((int(rng.integers(2, 7)), 3, dim))
        chain_worst = min(chain_worst, hpe.chain_bound_slack(w, chain))
    checks = []
    for key in ("grad_antisym", "three_point"):
        checks.append(Check(f"bregman_{key}", worst[key], IDENTITY_TOL, worst[key] <= IDENTITY_TOL))
    for key in ("lower", "upper", "grad_bound"):
        checks.append(Check(f"bregman_{key}", worst[key], -IDENTITY_TOL, worst[key] >= -IDENTITY_TOL,
                            "min slack"))
    checks.append(Check("bregman_chain", chain_worst, -IDENTITY_TOL, chain_worst >= -IDENTITY_TOL,
                        "min slack"))
    return checks


def _run_checks(prob, theta, gamma, k_max, mutate, tag):
    cfg = PRConfig(gamma=gamma, theta=theta, x0=np.zeros(prob.dim), beta=prob.beta,
                   tol=1e-300, max_iter=k_max)
    x_star = prob.x_star(gamma)
    d0 = float(np.linalg.norm(cfg.x0 - x_star))
    info = cfg.info
    states = _states(prob.A, prob.B, cfg, k_max, mutate)
    checks = []

    ident = 0.0
    aug = 0.0
    for s in states:
        scale = 1.0 + np.linalg.norm(s.x_prev) + np.linalg.norm(s.u) + np.linalg.norm(s.v)
        e1 = np.linalg.norm(s.x - s.x_prev - theta * (s.v - s.u))
        e2 = np.linalg.norm(s.u - s.v - gamma * (s.a + s.b))
        ident = max(ident, max(e1, e2) / scale)
        r = hpe.augmented_residual(s, info.theta_tilde, gamma)
        e3 = max(np.linalg.norm(r[0]), np.linalg.norm(r[1]), np.linalg.norm(r[2] - (s.u - s.v)))
        aug = max(aug, e3 / scale)
    checks.append(Check(f"{tag}/pr_identities", ident, 1e-10, ident <= 1e-10))
    checks.append(Check(f"{tag}/augmented_residual", aug, 1e-10, aug <= 1e-10))

    worst, ok = hpe.check_hpe_equality(states, theta, info.sigma)
    checks.append(Check(f"{tag}/hpe_equality", worst, 1e-9, ok, "relative"))

    dx = np.array([s.dx_norm for s in states])
    inc = float(np.max(np.diff(dx)))
    checks.append(Check(f"{tag}/step_monotone", inc, 1e-12, inc <= 1e-12))

    res = run(prob.A, prob.B, dataclasses.replace(cfg), diagnostics=True, x_star=x_star)
    tr = res.trace
    viol = [v for v in res.violations if v[1].startswith("inclusion")]
    checks.append(Check(f"{tag}/inclusions", float(len(viol)), 0.0, not viol))
    worst, ok = hpe.check_transportation(tr)
    checks.append(Check(f"{tag}/transportation_nonneg", worst, 0.0, ok, "min eps + tol"))
    worst, ok = hpe.check_fejer(tr)
    checks.append(Check(f"{tag}/fejer", worst, 1e-12, ok))
    if info.kind is Regime.INTERIOR:
        worst, ok = hpe.check_pointwise(tr, d0, theta, info.theta_tilde)
        checks.append(Check(f"{tag}/pointwise_bound", worst, 1.0, ok, "observed/bound"))
    else:
        checks.append(Check(f"{tag}/pointwise_bound", math.nan, math.nan, True,
                            "skipped: theta = 2 theta0"))
    worst, ok = hpe.check_ergodic(tr, d0, theta, info.theta_tilde, gamma)
    checks.append(Check(f"{tag}/ergodic_bounds", worst, 1.0, ok, "observed/bound"))
    return checks


def _counterexample_checks(k_max=60):
    checks = []
    for bb in ((0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 2.0)):
        inst = DivergenceInstance(*bb)
        thr = divergence_threshold(inst)
        for theta in (0.75 * thr, thr, thr + 0.5):
            sim = simulate(inst, theta, np.ones(inst.dim), k_max)
            err = sim.max_rel_error
            checks.append(Check(f"counterexample{bb}/theta={theta:g}/factor_match", err, 1e-12,
                                err <= 1e-12, sim.classification))
    return checks


def run_battery(seed=0, instances=5, k_max=200, mutate=False, bregman_samples=200):
    """Run every check; returns a list of :class:`Check`.

    Affine runs cover ``theta in {0.5, 1, 1.5, 2} theta0`` on each instance.
    """
    rng = np.random.default_rng(seed)
    checks = _bregman_checks(rng, bregman_samples)
    for i in range(instances):
        prob = affine_problem(rng, n=3, beta=float(rng.uniform(0.1, 1.0)))
        gamma = float(rng.uniform(0.5, 2.0))
        theta0 = 1.0 + gamma * prob.beta / 2.0
        for f in (0.5, 1.0, 1.5, 2.0):
            checks += _run_checks(prob, f * theta0, gamma, k_max, mutate, f"affine{i}/theta={f}theta0")
    checks += _counterexample_checks()
    return checks
