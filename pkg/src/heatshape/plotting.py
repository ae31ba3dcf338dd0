"""Figures written next to the delimited outputs (Agg backend, PNG)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.2),
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path):
    # no software/date metadata so repeated runs give identical files
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)


def space_time_map(path, grid, theta, values, title, label):
    """Heat map of a trace over (theta, t) with a final-time profile underneath."""
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(6.4, 6.0), height_ratios=[2, 1])
        im = ax0.pcolormesh(theta, grid.times, values, shading="nearest", cmap="RdBu_r")
        fig.colorbar(im, ax=ax0, label=label)
        ax0.set_xlabel(r"$\theta$")
        ax0.set_ylabel("t")
        ax0.set_title(title)
        ax0.grid(False)
        ax1.plot(theta, values[-1], "k-", lw=1.2)
        ax1.set_xlabel(r"$\theta$")
        ax1.set_ylabel(f"{label} at t = {grid.horizon:g}")
        fig.tight_layout()
        _save(fig, path)


def trace_comparison(path, theta, curves, title, ylabel):
    """Several final-time profiles on one axis; ``curves`` maps label -> values."""
    styles = ["k-", "C3--", "C0:", "C2-."]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for (lab, vals), st in zip(curves.items(), styles):
            ax.plot(theta, vals, st, lw=1.2, label=lab)
        ax.set_xlabel(r"$\theta$")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def convergence_plot(path, table, metrics=("err_max", "err_l2")):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        n = np.array([r["n_outer"] for r in table.rows], dtype=float)
        for m, mk in zip(metrics, "os^"):
            e = np.array([r[m] for r in table.rows])
            order = table.fitted.get(m)
            lab = m if order is None else f"{m} (fitted order {order:.2f})"
            ax.loglog(n, e, mk + "-", label=lab)
        if len(n) > 1:
            ref = table.rows[0][metrics[0]] * (n / n[0]) ** -2.0
            ax.loglog(n, ref, "k:", lw=0.8, label="slope -2")
        ax.set_xlabel("nodes per curve")
        ax.set_ylabel("error")
        ax.set_title("manufactured-solution convergence")
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def reconstruction_plot(path, outer, truth, recon, initial, residuals):
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9.0, 4.2))
        for crv, st, lab in ((outer, "k-", "outer"), (truth, "C2-", "truth"),
                             (initial, "C0:", "initial"), (recon, "C3--", "reconstruction")):
            p = crv.sample(400)
            p = np.vstack([p, p[:1]])
            ax0.plot(p[:, 0], p[:, 1], st, lw=1.2, label=lab)
        ax0.set_aspect("equal")
        ax0.legend(loc="upper right")
        ax0.set_title("inner boundary")
        ax1.semilogy(np.arange(len(residuals)), residuals, "ko-", ms=3)
        ax1.set_xlabel("iteration")
        ax1.set_ylabel("residual norm")
        ax1.set_title("Gauss-Newton history")
        fig.tight_layout()
        _save(fig, path)
