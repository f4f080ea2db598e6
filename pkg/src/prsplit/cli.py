"""Command-line front end.

Subcommands ``solve``, ``lasso-table``, ``lasso-sweep``, ``counterexample``
and ``verify``.  Options come from an optional flat ``key = value`` config
file and from flags; flags win.  Environment variables are ignored.

Exit codes: 0 success (for ``solve``: converged), 1 bad config or usage,
2 divergence guard, 3 iteration cap, 4 failed verification checks.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys

import numpy as np

from . import hpe
from .counterexample import DivergenceInstance, theta_scan
from .lasso import (
    CSV_FIELDS,
    SWEEP_GRID,
    TABLE_CELLS,
    TABLE_THETAS,
    ExperimentConfig,
    evaluate_expr,
    generate_instance,
    lasso_operators,
    reference_solution,
    run_sweep,
    run_table,
)
from .problems import affine_problem
from .splitting import PRConfig, Regime, run
from .verify import failures, run_battery

log = logging.getLogger("prsplit")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MAX_ITER, EXIT_CHECKS = 0, 1, 2, 3, 4
EXIT_FOR_REASON = {"tolerance": EXIT_OK, "divergence_guard": EXIT_DIVERGED, "max_iter": EXIT_MAX_ITER}

SOLVE_COLUMNS = ("k", "delta_x_norm", "residual_norm", "eps_prime", "eps_double_prime",
                 "ergodic_residual_norm", "pointwise_bound", "ergodic_residual_bound",
                 "ergodic_eps_bound")

# key -> (parser, default); shared by config files and flags
OPTIONS = {
    "out": (str, None),
    "seed": (int, 0),
    "theta": (str, None),
    "gamma": (str, "1"),
    "alpha_prime": (str, "0"),
    "tol": (float, 1e-5),
    "max_iter": (int, None),
    "partition": (str, "fg"),
    "format": (str, "csv"),
    "figure": (str, None),
    "problem": (str, "affine-qp"),
    "beta": (float, None),
    "beta_bar": (float, None),
    "dim": (int, 3),
    "instances": (int, None),
    "workers": (int, 1),
    "thetas": (str, None),
    "gammas": (str, None),
    "alpha_primes": (str, None),
    "theta_min": (float, 1.5),
    "theta_max": (float, 4.5),
    "theta_step": (float, 0.25),
    "mutate": (lambda s: str(s).lower() in ("1", "true", "yes", "on"), False),
}
CHOICES = {"partition": ("fg", "gf"), "format": ("csv", "json"),
           "problem": ("affine-qp", "lasso", "counterexample")}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with the
    # divergence exit code
    def error(self, message):
        raise ConfigError(message)


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = val
    return out


def resolve_options(file_opts, flag_opts):
    """Merge defaults, config file and flags (in that order) and type-check."""
    merged = {k: d for k, (_, d) in OPTIONS.items()}
    for src in (file_opts, flag_opts):
        for k, v in src.items():
            if v is None:
                continue
            try:
                merged[k] = OPTIONS[k][0](v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {k}: {v!r}") from exc
    for k, allowed in CHOICES.items():
        if merged[k] not in allowed:
            raise ConfigError(f"{k} must be one of {allowed}, got {merged[k]!r}")
    return merged


def build_parser():
    p = _Parser(prog="prsplit", description="Relaxed Peaceman-Rachford splitting toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat key = value file; flags override it")
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--format", choices=CHOICES["format"])
        sp.add_argument("--figure", help="also render a figure to this path")
        sp.add_argument("-v", "--verbose", action="store_true")

    def solver(sp):
        sp.add_argument("--theta")
        sp.add_argument("--gamma")
        sp.add_argument("--alpha-prime", dest="alpha_prime")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", dest="max_iter", type=int)
        sp.add_argument("--partition", choices=CHOICES["partition"])

    sp = sub.add_parser("solve", help="one solve, per-iteration trace with bounds")
    common(sp)
    solver(sp)
    sp.add_argument("--problem", choices=CHOICES["problem"])
    sp.add_argument("--beta", type=float)
    sp.add_argument("--beta-bar", dest="beta_bar", type=float)
    sp.add_argument("--dim", type=int)

    for name, helptext in (("lasso-table", "iteration table over theta x (gamma, alpha')"),
                           ("lasso-sweep", "iterations over an alpha' grid")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        solver(sp)
        sp.add_argument("--instances", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--thetas", help="comma-separated expressions")
        sp.add_argument("--gammas", help="comma-separated expressions")
        sp.add_argument("--alpha-primes", dest="alpha_primes", help="comma-separated expressions")

    sp = sub.add_parser("counterexample", help="iteration factors over a theta grid")
    common(sp)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--beta-bar", dest="beta_bar", type=float)
    sp.add_argument("--gamma")
    sp.add_argument("--theta-min", dest="theta_min", type=float)
    sp.add_argument("--theta-max", dest="theta_max", type=float)
    sp.add_argument("--theta-step", dest="theta_step", type=float)

    sp = sub.add_parser("verify", help="run the invariant battery")
    common(sp)
    sp.add_argument("--instances", type=int)
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--mutate", action="store_const", const="true",
                    help="corrupt one certificate to check the battery fails")
    return p


# --- output ------------------------------------------------------------------


def write_rows(rows, columns, fmt, stream):
    if fmt == "json":
        json.dump([dict(zip(columns, r)) for r in rows], stream, indent=2, default=_json_default)
        stream.write("\n")
        return
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


def read_csv(text):
    """Parse CSV produced here back into dicts of floats (ints stay ints)."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append({k: _parse_cell(v) for k, v in rec.items()})
    return out


def _parse_cell(v):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    if v in ("True", "False"):
        return v == "True"
    return v


def _emit(opts, text):
    if opts["out"]:
        with open(opts["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _render(rows, columns, opts):
    buf = io.StringIO()
    write_rows(rows, columns, opts["format"], buf)
    _emit(opts, buf.getvalue())


# --- commands ----------------------------------------------------------------


def _expr(opts, key, **names):
    try:
        return evaluate_expr(opts[key], **names)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _solve_problem(opts):
    """Build ``(A, B, x0, x_star, gamma, theta, beta, note)`` for ``solve``."""
    problem = opts["problem"]
    if opts["theta"] is None:
        raise ConfigError("solve needs theta")
    if problem == "affine-qp":
        beta = 0.5 if opts["beta"] is None else opts["beta"]
        if opts["dim"] < 2:
            raise ConfigError("dim must be at least 2")
        prob = affine_problem(opts["seed"], n=opts["dim"], beta=beta)
        gamma = _expr(opts, "gamma", beta=beta)
        theta = _expr(opts, "theta", beta=beta, gamma=gamma)
        x0 = np.zeros(prob.dim)
        return prob.A, prob.B, x0, prob.x_star(gamma), gamma, theta, prob.beta, "exact solution"
    if problem == "counterexample":
        bb = opts["beta_bar"]
        beta = 0.0 if opts["beta"] is None else opts["beta"]
        inst = DivergenceInstance(beta, beta if bb is None else bb,
                                  gamma=_expr(opts, "gamma", beta=beta))
        theta = _expr(opts, "theta", beta=beta, gamma=inst.gamma)
        A, B = inst.operators()
        x0 = np.ones(inst.dim)
        return A, B, x0, inst.solution(x0), inst.gamma, theta, min(beta, inst.beta_bar), "exact solution"
    inst = generate_instance(opts["seed"])
    names = dict(alpha=inst.alpha, kappa=inst.kappa)
    gamma = _expr(opts, "gamma", **names)
    ap = _expr(opts, "alpha_prime", **names)
    theta = _expr(opts, "theta", gamma=gamma, **names)
    A, B = lasso_operators(inst, ap, opts["partition"], gammas=(gamma,))
    # the L1-side reference minimizer u* gives x* = u* + gamma a*
    u_ref = reference_solution(inst)
    a_ref = A.point_eval(u_ref) if A.single_valued else -B.point_eval(u_ref)
    x_star = u_ref + gamma * a_ref
    note = "reference solve at tol 1e-12 (proxy for the exact solution)"
    return A, B, np.zeros(inst.C.shape[1]), x_star, gamma, theta, min(A.modulus, B.modulus), note


def cmd_solve(opts):
    A, B, x0, x_star, gamma, theta, beta, note = _solve_problem(opts)
    max_iter = opts["max_iter"] or 1000
    try:
        cfg = PRConfig(gamma=gamma, theta=theta, x0=x0, beta=beta, tol=opts["tol"], max_iter=max_iter)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if A.modulus != B.modulus:
        log.warning("moduli differ (A: %g, B: %g); certificates use the smaller one",
                    A.modulus, B.modulus)
    res = run(A, B, cfg, diagnostics=True, x_star=x_star)
    info = cfg.info
    tr = res.trace
    k = tr.k
    d0 = float(np.linalg.norm(x0 - x_star))
    nan = np.full(k.size, np.nan)
    pw = nan
    if info.kind is Regime.INTERIOR:
        pw = hpe.pointwise_bound_pr(k, d0, theta, info.theta_tilde)
    erg_r, erg_e = nan, nan
    if info.kind is not Regime.UNCERTIFIED:
        erg_r, erg_e = hpe.ergodic_bounds_pr(k, d0, theta, info.theta_tilde, gamma)
    cols = [k, tr["delta_x_norm"], tr["residual_norm"], tr["eps_prime"], tr["eps_double_prime"],
            tr["ergodic_residual_norm"], pw, erg_r, erg_e]
    rows = [[int(c[i]) if j == 0 else float(c[i]) for j, c in enumerate(cols)] for i in range(k.size)]
    _render(rows, SOLVE_COLUMNS, opts)
    log.info("regime %s, theta0=%g, sigma=%g; modulus min(A, B) = %g; distance from %s",
             info.kind.value, info.theta0, info.sigma, beta, note)
    log.info("stopped after %d iterations: %s", res.iterations, res.reason)
    for v in res.violations[:10]:
        log.warning("diagnostic violation at k=%d: %s (%g vs %g)", *v)
    if opts["figure"]:
        from .plotting import plot_trace

        bounds = {}
        if info.kind is Regime.INTERIOR:
            bounds["pointwise_bound"] = pw
        if info.kind is not Regime.UNCERTIFIED:
            bounds["ergodic_residual_bound"] = erg_r
        plot_trace(tr, opts["figure"], bounds)
    return EXIT_FOR_REASON[res.reason]


def _split(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _experiment(opts, default_iter, thetas=TABLE_THETAS, cells=TABLE_CELLS):
    if opts["thetas"]:
        thetas = _split(opts["thetas"])
    if opts["gammas"] or opts["alpha_primes"]:
        gs = _split(opts["gammas"]) if opts["gammas"] else tuple(dict.fromkeys(c[0] for c in cells))
        aps = _split(opts["alpha_primes"]) if opts["alpha_primes"] else tuple(dict.fromkeys(c[1] for c in cells))
        cells = tuple((g, a) for g in gs for a in aps)
    try:
        return ExperimentConfig(
            thetas=thetas, cells=cells, partition=opts["partition"], tol=opts["tol"],
            max_iter=opts["max_iter"] or default_iter, instances=opts["instances"] or 20,
            base_seed=opts["seed"], workers=max(1, opts["workers"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_lasso_table(opts):
    cfg = _experiment(opts, 500)
    rows, records = run_table(cfg)
    for r in rows:
        s = r.summary()
        log.info("theta=%s gamma=%s alpha'=%s: %s (censored %d/%d)", s["theta"], s["gamma"],
                 s["alpha_prime"], s["reported"], s["censored"], s["instances"])
    if opts["format"] == "json":
        _emit(opts, json.dumps([r.summary() for r in rows], indent=2) + "\n")
    else:
        _render([r.csv_row() for r in records], CSV_FIELDS, opts)
    if opts["figure"]:
        from .plotting import plot_table

        plot_table(rows, opts["figure"])
    return EXIT_OK


def cmd_lasso_sweep(opts):
    cfg = _experiment(opts, 500)
    theta = opts["theta"] or "2"
    aps = _split(opts["alpha_primes"]) if opts["alpha_primes"] else SWEEP_GRID
    try:
        records = run_sweep(cfg, theta, opts["gamma"], aps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if opts["format"] == "json":
        _emit(opts, json.dumps(_sweep_summary(records), indent=2) + "\n")
    else:
        _render([r.csv_row() for r in records], CSV_FIELDS, opts)
    if opts["figure"]:
        from .plotting import plot_sweep

        plot_sweep(records, opts["figure"])
    return EXIT_OK


def _sweep_summary(records):
    out = {}
    for r in records:
        d = out.setdefault(r.alpha_prime_label, dict(alpha_prime=r.alpha_prime_label,
                                                     iterations=[], censored=0))
        d["iterations"].append(r.iterations)
        d["censored"] += int(r.censored)
    for d in out.values():
        d["median_iterations"] = float(np.median(d["iterations"]))
    return list(out.values())


def cmd_counterexample(opts):
    beta = 0.0 if opts["beta"] is None else opts["beta"]
    bb = beta if opts["beta_bar"] is None else opts["beta_bar"]
    try:
        inst = DivergenceInstance(beta, bb, gamma=_expr(opts, "gamma"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    lo, hi, step = opts["theta_min"], opts["theta_max"], opts["theta_step"]
    if not (0 < lo <= hi and step > 0):
        raise ConfigError("need 0 < theta_min <= theta_max and theta_step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    thetas = [round(lo + i * step, 12) for i in range(n)]
    if inst.gamma != 1.0:
        log.warning("threshold for gamma != 1 comes from scaling both moduli by gamma; "
                    "it is checked by simulation, not derived separately")
    rows = theta_scan(inst, thetas)
    cols = ("theta", "f1", "f2", "threshold", "classification")
    _render([[r[c] for c in cols] for r in rows], cols, opts)
    if opts["figure"]:
        from .plotting import plot_factors

        plot_factors(rows, opts["figure"])
    return EXIT_OK


def cmd_verify(opts):
    checks = run_battery(seed=opts["seed"], instances=opts["instances"] or 5,
                         k_max=opts["max_iter"] or 200, mutate=opts["mutate"])
    cols = ("name", "observed", "bound", "ok", "note")
    _render([[getattr(c, f) for f in cols] for c in checks], cols, opts)
    bad = failures(checks)
    for c in bad:
        log.error("FAILED %s: observed %g, bound %g", c.name, c.observed, c.bound)
    log.info("%d checks, %d failed", len(checks), len(bad))
    return EXIT_CHECKS if bad else EXIT_OK


COMMANDS = {"solve": cmd_solve, "lasso-table": cmd_lasso_table, "lasso-sweep": cmd_lasso_sweep,
            "counterexample": cmd_counterexample, "verify": cmd_verify}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        flags = {k: v for k, v in vars(args).items() if k in OPTIONS}
        file_opts = read_config(args.config) if args.config else {}
        opts = resolve_options(file_opts, flags)
        return COMMANDS[args.command](opts)
    except ConfigError as exc:
        print(f"prsplit: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
