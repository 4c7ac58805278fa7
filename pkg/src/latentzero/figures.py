"""Render the delimited analysis outputs as matplotlib figures.

Each produced CSV gets a PNG sibling so a run directory is browsable
without extra tooling. Rendering is best-effort presentation; the CSVs
remain the ground truth.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_csv(path):
    with open(path) as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return rows


def _save(fig, csv_path):
    out = os.path.splitext(csv_path)[0] + ".png"
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_loss(csv_path):
    rows = _read_csv(csv_path)
    steps = [int(r["step"]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    for col in ("total", "policy", "value", "decoder", "consistency", "reward"):
        vals = [float(r[col]) for r in rows]
        if any(v != 0 for v in vals):
            ax.plot(steps, vals, label=col, linewidth=1)
    ax.set_xlabel("optimizer step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    return _save(fig, csv_path)


def plot_errors(csv_path):
    rows = _read_csv(csv_path)
    fig, axes = plt.subplots(1, 4, figsize=(13, 3))
    modes = (("kt", "-"), ("k5", "--"), ("k0", ":"))
    for ax, metric, label in zip(axes, ("l_o", "l_s", "l_p", "l_v"),
                                 ("observation", "hidden state", "policy", "value")):
        for mode, style in modes:
            col = f"{metric}_{mode}"
            pts = [(int(r["t"]), float(r[col])) for r in rows if r.get(col)]
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], style,
                        linewidth=1, label=f"k={mode[1:]}")
        ax.set_title(label, fontsize=9)
        ax.set_xlabel("t")
    axes[0].legend(fontsize=7)
    return _save(fig, csv_path)


def plot_fig9(csv_path):
    rows = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    sims = sorted({int(r["simulations"]) for r in rows})
    for s in sims:
        pts = [(int(r["k"]), 100 * float(r["proportion"])) for r in rows
               if int(r["simulations"]) == s]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                markersize=3, linewidth=1, label=f"{s} sims")
    ax.set_xlabel("steps to the terminal (k)")
    ax.set_ylabel("proportion in the tree (%)")
    ax.legend(fontsize=8)
    return _save(fig, csv_path)


def plot_fig10(csv_path):
    rows = _read_csv(csv_path)
    ks = [int(r["k"]) for r in rows]
    mse = [float(r["mse"]) for r in rows]
    err = [float(r["stderr"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ks, mse, linewidth=1)
    ax.fill_between(ks, [m - e for m, e in zip(mse, err)],
                    [m + e for m, e in zip(mse, err)], alpha=0.25)
    ax.set_xlabel("unrolling steps after terminal (k)")
    ax.set_ylabel("MSE")
    return _save(fig, csv_path)


def plot_fig11(csv_path):
    rows = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    windows = sorted({int(r["N"]) for r in rows})
    for n in windows:
        pts = sorted((int(r["t"]), float(r["mse"])) for r in rows if int(r["N"]) == n)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], linewidth=1, label=f"N={n}")
    ax.set_xlabel("t")
    ax.set_ylabel("MSE")
    ax.legend(fontsize=8)
    return _save(fig, csv_path)


def plot_fig12(csv_path):
    rows = _read_csv(csv_path)
    pts = sorted((int(r["simulations"]), float(r["performance_pct"])) for r in rows)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", markersize=4)
    ax.axhline(100.0, linestyle=":", linewidth=1)
    ax.set_xscale("log")
    ax.set_xlabel("# simulations")
    ax.set_ylabel("playing performance (%)")
    return _save(fig, csv_path)


def plot_pca(csv_path):
    rows = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 5))
    variants = sorted({r["variant"] for r in rows})
    for variant in variants:
        xs = [float(r["pc1"]) for r in rows if r["variant"] == variant]
        ys = [float(r["pc2"]) for r in rows if r["variant"] == variant]
        ax.plot(xs, ys, marker=".", markersize=3, linewidth=0.5, label=variant, alpha=0.7)
    for r in rows:
        if r["variant"] == "true" and r["marker"]:
            ax.annotate(r["marker"], (float(r["pc1"]), float(r["pc2"])), fontsize=7)
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.legend(fontsize=8)
    return _save(fig, csv_path)


def plot_bandit_failure(csv_path):
    rows = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ts = [int(r["T"]) for r in rows]
    ps = [float(r["failure_rate"]) for r in rows]
    es = [float(r["stderr"]) for r in rows]
    ax.errorbar(ts, ps, yerr=es, marker="o", markersize=3, linewidth=1)
    ax.set_xscale("log")
    ax.set_xlabel("horizon T")
    ax.set_ylabel("Pr[selected arm is suboptimal]")
    return _save(fig, csv_path)


def plot_bandit_mean_error(csv_path):
    rows = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    arms = sorted({int(r["arm"]) for r in rows})
    for arm in arms:
        pts = sorted((int(r["plays"]), float(r["mean_abs_error"])) for r in rows
                     if int(r["arm"]) == arm)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], linewidth=1, label=f"arm {arm}")
    ax.set_xscale("log")
    ax.set_xlabel("plays of the arm")
    ax.set_ylabel("E|mean error|")
    ax.legend(fontsize=8)
    return _save(fig, csv_path)


RENDERERS = {
    "loss.csv": plot_loss,
    "errors_recent.csv": plot_errors,
    "errors_early.csv": plot_errors,
    "fig9.csv": plot_fig9,
    "fig10.csv": plot_fig10,
    "fig11.csv": plot_fig11,
    "fig12.csv": plot_fig12,
    "pca.csv": plot_pca,
    "bandit_failure_rate.csv": plot_bandit_failure,
    "bandit_mean_error.csv": plot_bandit_mean_error,
}


def render_for(csv_path):
    name = os.path.basename(csv_path)
    renderer = RENDERERS.get(name)
    if renderer is None:
        return None
    return renderer(csv_path)
