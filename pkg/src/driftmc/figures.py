"""Figure rendering for the CLI report paths.

Every report command writes its delimited output first and then, unless
figures are disabled, renders a companion PNG next to it. Rendering is
deterministic: the Agg backend, fixed rcParams, and stripped PNG metadata make
re-runs byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "render_compare",
    "render_sweep",
    "render_histogram",
    "render_surface",
    "render_volgrid",
    "render_loss_history",
]

_RC = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)


def render_compare(path, report):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 4.0))
        labels = ["plain MC", "importance sampling"]
        stds = [report.std_plain, report.std_is]
        ax.bar(labels, stds, color=["#777777", "#2a6fb0"], width=0.55)
        for i, s in enumerate(stds):
            ax.text(i, s, f"{s:.4g}", ha="center", va="bottom", fontsize=8)
        ax.set_ylabel("per-sample std deviation")
        ax.set_title(
            f"price {report.price_is:.6g}  |  std ratio {report.std_ratio:.3g}"
            f"  (variance / {report.variance_ratio:.3g})"
        )
        _save(fig, path)


def render_sweep(path, rows, title=""):
    valid = [r for r in rows if r.valid]
    if not valid:
        return
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        x = [r.value for r in valid]
        ax.plot(x, [r.report.std_plain for r in valid], "o-", color="#777777", label="plain MC std")
        ax.plot(x, [r.report.std_is for r in valid], "s-", color="#2a6fb0", label="IS std")
        ax.set_xlabel(valid[0].parameter)
        ax.set_ylabel("per-sample std deviation")
        twin = ax.twinx()
        twin.plot(x, [r.report.std_ratio for r in valid], "--", color="#b03030", label="std ratio")
        twin.axhline(1.0, color="#b03030", lw=0.6, alpha=0.5)
        twin.set_ylabel("std ratio (plain / IS)")
        twin.grid(False)
        lines, labels = ax.get_legend_handles_labels()
        lines2, labels2 = twin.get_legend_handles_labels()
        ax.legend(lines + lines2, labels + labels2, loc="best", fontsize=8)
        if title:
            ax.set_title(title)
        _save(fig, path)


def render_histogram(path, bins, log_scale=False, density_curve=None, title=""):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        lefts = np.array([b[0] for b in bins])
        rights = np.array([b[1] for b in bins])
        counts = np.array([b[2] for b in bins], dtype=float)
        widths = rights - lefts
        if density_curve is not None:
            total = counts.sum()
            with np.errstate(invalid="ignore", divide="ignore"):
                heights = np.where(widths > 0, counts / (total * widths), 0.0)
            ax.bar(lefts, heights, width=widths, align="edge",
                   color="#2a6fb0", alpha=0.7, label="simulated")
            xs = [p[0] for p in density_curve]
            ys = [p[1] for p in density_curve]
            ax.plot(xs, ys, color="#b03030", lw=1.5, label="base-measure density")
            ax.set_ylabel("density")
            ax.legend(fontsize=8)
        else:
            ax.bar(lefts, counts, width=widths, align="edge", color="#2a6fb0", alpha=0.8)
            ax.set_ylabel("count")
        ax.set_xlabel("log10(value)" if log_scale else "value")
        if title:
            ax.set_title(title)
        _save(fig, path)


def render_surface(path, rows, step0, title=""):
    ts = sorted({r[0] for r in rows})
    xs = sorted({r[1] for r in rows})
    grid = np.full((len(ts), len(xs)), np.nan)
    t_idx = {t: i for i, t in enumerate(ts)}
    x_idx = {x: j for j, x in enumerate(xs)}
    for t, x, a in rows:
        grid[t_idx[t], x_idx[x]] = a
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        mesh = ax.pcolormesh(xs, ts, grid, shading="nearest", cmap="RdBu_r")
        fig.colorbar(mesh, ax=ax, label="drift value")
        ax.set_xlabel("underlying level x")
        ax.set_ylabel("time t")
        ax.set_title(title or f"learned drift surface (step-0 constant {step0:.4g})")
        _save(fig, path)


def render_volgrid(path, rows, title=""):
    ts = sorted({r[0] for r in rows})
    ks = sorted({r[1] for r in rows})
    iv = np.full((len(ts), len(ks)), np.nan)
    lv = np.full((len(ts), len(ks)), np.nan)
    t_idx = {t: i for i, t in enumerate(ts)}
    k_idx = {k: j for j, k in enumerate(ks)}
    for t, k, ivk, lvk in rows:
        iv[t_idx[t], k_idx[k]] = ivk
        lv[t_idx[t], k_idx[k]] = lvk
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.0))
        for ax, data, name in ((axes[0], iv, "implied vol"), (axes[1], lv, "local vol")):
            mesh = ax.pcolormesh(ks, ts, data, shading="nearest", cmap="viridis")
            fig.colorbar(mesh, ax=ax, label=name)
            ax.set_xlabel("log-moneyness k")
            ax.set_ylabel("t")
            ax.set_title(name)
        if title:
            fig.suptitle(title)
        _save(fig, path)


def render_loss_history(path, loss_history, steps_per_batch=None, title=""):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(loss_history, lw=0.8, color="#2a6fb0")
        if steps_per_batch:
            for b in range(steps_per_batch, len(loss_history), steps_per_batch):
                ax.axvline(b, color="#cccccc", lw=0.4, zorder=0)
        ax.set_xlabel("training step")
        ax.set_ylabel("loss")
        ax.set_yscale("log")
        if title:
            ax.set_title(title)
        _save(fig, path)
