"""Figures for the CLI reports, rendered headless to files.

Each function takes the same in-memory data the CLI writes as CSV and saves
one figure.  The output format follows the file suffix (png, pdf, svg).
"""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["style", "plot_trace", "plot_sweep", "plot_table", "plot_factors"]

GOLDEN = (math.sqrt(5) - 1.0) / 2.0


def style(width=6.0):
    """rc settings used by every figure here."""
    return {
        "figure.figsize": (width, width * GOLDEN),
        "font.size": 9,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "lines.linewidth": 1.2,
        "savefig.dpi": 150,
        "savefig.bbox": "tight",
    }


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_trace(trace, path, bounds=None):
    """Residual histories of one solve on log axes.

    ``bounds`` maps column names of extra bound series (same length as the
    trace) to arrays; they are drawn dashed.
    """
    with plt.rc_context(style()):
        fig, ax = plt.subplots()
        k = trace.k
        for name in ("delta_x_norm", "residual_norm", "ergodic_residual_norm"):
            y = np.asarray(trace[name])
            ax.loglog(k, np.where(y > 0, y, np.nan), label=name.replace("_", " "))
        for name, y in (bounds or {}).items():
            ax.loglog(k, y, "--", label=name.replace("_", " "))
        ax.set_xlabel("iteration k")
        ax.set_ylabel("norm")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_sweep(records, path):
    """Iterations along the alpha' grid per instance, median in black.

    Each instance has its own alpha, so the x axis is the grid label.
    """
    labels = list(dict.fromkeys(r.alpha_prime_label for r in records))
    pos = {lab: i for i, lab in enumerate(labels)}
    by_seed = {}
    for r in records:
        by_seed.setdefault(r.instance_seed, np.full(len(labels), np.nan))[pos[r.alpha_prime_label]] = r.iterations
    x = np.arange(len(labels))
    with plt.rc_context(style()):
        fig, ax = plt.subplots()
        for seed in sorted(by_seed):
            ax.plot(x, by_seed[seed], color="0.7", lw=0.8)
        med = np.nanmedian(np.array(list(by_seed.values())), axis=0)
        ax.plot(x, med, "k-o", ms=3, label="median")
        ax.set_xticks(x, labels)
        ax.set_xlabel("alpha'")
        ax.set_ylabel("iterations")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_table(rows, path):
    """Mean iterations per theta for each (gamma, alpha') column; censored cells hollow."""
    thetas = list(dict.fromkeys(r.theta_label for r in rows))
    cols = list(dict.fromkeys((r.gamma_label, r.alpha_prime_label) for r in rows))
    x = np.arange(len(thetas))
    with plt.rc_context(style()):
        fig, ax = plt.subplots()
        for col in cols:
            sel = {r.theta_label: r for r in rows if (r.gamma_label, r.alpha_prime_label) == col}
            y = np.array([sel[t].mean_iterations for t in thetas])
            cens = np.array([sel[t].censored_count * 2 > len(sel[t].iterations) for t in thetas])
            line, = ax.plot(x, y, "-", label=f"gamma={col[0]}, alpha'={col[1]}")
            ax.plot(x[~cens], y[~cens], "o", color=line.get_color(), ms=4)
            ax.plot(x[cens], y[cens], "o", mfc="none", color=line.get_color(), ms=6)
        ax.set_xticks(x, thetas, rotation=20)
        ax.set_xlabel("theta")
        ax.set_ylabel("mean iterations")
        ax.set_yscale("log")
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def plot_factors(rows, path):
    """Both iteration factors over theta with the +-1 band and the threshold."""
    th = np.array([r["theta"] for r in rows])
    with plt.rc_context(style()):
        fig, ax = plt.subplots()
        ax.plot(th, [r["f1"] for r in rows], label="f1")
        ax.plot(th, [r["f2"] for r in rows], label="f2")
        ax.axhspan(-1.0, 1.0, color="0.9", zorder=0)
        thr = rows[0]["threshold"]
        if math.isfinite(thr):
            ax.axvline(thr, color="k", ls=":", label="threshold")
        ax.set_xlabel("theta")
        ax.set_ylabel("factor")
        ax.legend(frameon=False)
        return _save(fig, path)
