"""Figures written next to the CSV/JSON artifacts.

Everything renders off-screen to PNG with fixed metadata, so reruns of the
same configuration give the same files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 5.0

params = {
    "axes.labelsize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 100,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "nonlocal-cl",
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def density_snapshots(path: Path, lagrangian=(), eulerian=(), exact=None, title: str = "") -> Path:
    """lagrangian/eulerian: iterables of (t, GridField); exact: t -> GridField."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        cmap = plt.get_cmap("viridis")
        items = list(lagrangian) or list(eulerian)
        times = sorted({t for t, _ in list(lagrangian) + list(eulerian)})
        color = {t: cmap(i / max(1, len(times) - 1)) for i, t in enumerate(times)}
        for t, g in lagrangian:
            ax.step(g.centers, g.values, where="mid", color=color[t], label=f"particles t={t:.2f}")
        for t, g in eulerian:
            ax.plot(g.centers, g.values, "--", color=color[t], label=f"upwind t={t:.2f}")
        if exact is not None:
            for t in times:
                ex = exact(t)
                if ex is not None:
                    ax.plot(ex.centers, ex.values, ":", color="k", lw=0.8)
        ax.set_xlabel("x")
        ax.set_ylabel("u(t, x)")
        if title:
            ax.set_title(title)
        if items and len(times) <= 8:
            ax.legend(ncol=2)
        return _save(fig, path)


def blowup_growth(path: Path, times, max_u, estimate=None) -> Path:
    t = np.asarray(times)
    m = np.asarray(max_u, dtype=float)
    ok = np.isfinite(m) & (m > 0)
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.plot(t[ok], 1.0 / m[ok], label="1 / max u")
        if estimate is not None and estimate.detected:
            ax.axvline(estimate.extrapolated, color="C3", ls="--",
                       label=f"extrapolated T = {estimate.extrapolated:.4f}")
        ax.set_xlabel("t")
        ax.set_ylabel("1 / max u")
        ax.legend()
        return _save(fig, path)


def centroid_track(path: Path, times, centroid, predicted, spread=None) -> Path:
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.plot(times, centroid, label="centroid")
        if spread is not None:
            c, s = np.asarray(centroid), np.asarray(spread)
            ax.fill_between(times, c - s, c + s, alpha=0.25, label="± spread")
        ax.plot(times, predicted, "k:", label="predicted")
        ax.set_xlabel("t")
        ax.set_ylabel("x")
        ax.legend()
        return _save(fig, path)


def study_overview(path: Path, reports) -> Path:
    """Centroid tracks for every (alpha, n) and final error versus n."""
    reports = sorted(reports, key=lambda r: (r.alpha, r.n))
    alphas = sorted({r.alpha for r in reports})
    with plt.rc_context(params):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(2 * fig_width, fig_width * golden_mean))
        for i, a in enumerate(alphas):
            for r in (r for r in reports if r.alpha == a):
                ax1.plot(r.times, r.centroid, color=f"C{i}", alpha=0.4 + 0.6 * r.n / max(x.n for x in reports))
            first = next(r for r in reports if r.alpha == a)
            ax1.plot(first.times, first.predicted, "k:", lw=0.8)
            sub = [r for r in reports if r.alpha == a]
            ax2.loglog([r.n for r in sub], [max(r.final_centroid_error, 1e-16) for r in sub], "o-",
                       color=f"C{i}", label=f"alpha = {a:g}")
        ax1.set_xlabel("t")
        ax1.set_ylabel("centroid")
        ax2.set_xlabel("n")
        ax2.set_ylabel("final centroid error")
        ax2.legend()
        return _save(fig, path)
