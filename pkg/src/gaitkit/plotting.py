"""Figures for the evaluation tables and the segmentation diagnostic.

Everything renders off-screen (Agg) straight to PNG files; nothing here is
needed by the library proper.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
WIDTH_IN = 5.0

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _figure(aspect=GOLDEN):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(WIDTH_IN, WIDTH_IN * aspect))
    return fig, ax


def _save(fig, path):
    with plt.rc_context(STYLE):
        fig.tight_layout()
        # fixed metadata keeps repeated renders byte-stable
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _line(rows, x, y, xlabel, ylabel, path, group=None, logx=False):
    fig, ax = _figure()
    groups = sorted({r[group] for r in rows}) if group else [None]
    for g in groups:
        sel = [r for r in rows if group is None or r[group] == g]
        ax.plot([r[x] for r in sel], [r[y] for r in sel], "o-", lw=1.2, ms=4, label=g)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if group:
        ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_grid(rows, path):
    gammas = sorted({r["gamma"] for r in rows})
    nus = sorted({r["nu"] for r in rows})
    z = np.full((len(nus), len(gammas)), np.nan)
    for r in rows:
        z[nus.index(r["nu"]), gammas.index(r["gamma"])] = r["f_measure"]
    fig, ax = _figure(0.8)
    im = ax.imshow(z, origin="lower", aspect="auto", cmap="viridis", vmin=0, vmax=1)
    ax.set_xticks(range(len(gammas)), [f"{g:g}" for g in gammas])
    ax.set_yticks(range(len(nus)), [f"{v:g}" for v in nus])
    ax.set_xlabel(r"$\gamma$")
    ax.set_ylabel(r"$\nu$")
    fig.colorbar(im, ax=ax, label="F-measure")
    _save(fig, path)


def plot_gyro(rows, path):
    fig, ax = _figure()
    ax.bar([r["input"] for r in rows], [r["accuracy"] for r in rows], color=["C0", "C1"][:len(rows)], width=0.5)
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1.02)
    _save(fig, path)


def plot_sprt(rows, path):
    fig, ax = _figure()
    lv = [r["alpha_beta"] for r in rows]
    ax.plot(lv, [r["false_positive"] for r in rows], "o-", label="false positive")
    ax.plot(lv, [r["false_negative"] for r in rows], "s-", label="false negative")
    ax.set_xscale("log")
    ax.set_xlabel(r"design error $\alpha = \beta$")
    ax.set_ylabel("empirical error rate")
    ax2 = ax.twinx()
    ax2.plot(lv, [r["mean_cycles"] for r in rows], "^--", color="0.4", label="mean cycles")
    ax2.set_ylabel("cycles to decision")
    ax.legend(frameon=False, loc="upper left")
    _save(fig, path)


def plot_protocol(name, rows, path):
    if name == "nc-sweep":
        _line(rows, "n_c", "accuracy", "training cycles per subject", "test accuracy", path)
    elif name == "features":
        _line(rows, "features", "accuracy", "feature vector size F", "test accuracy", path)
    elif name == "gyro":
        plot_gyro(rows, path)
    elif name == "osvm-grid":
        plot_grid(rows, path)
    elif name == "pca-sweep":
        _line(rows, "S", "f_measure", "retained components S", "F-measure", path, group="mode")
    elif name == "enroll-size":
        _line(rows, "enroll_cycles", "f_measure", "enrollment cycles", "F-measure", path, logx=True)
    elif name == "sprt":
        plot_sprt(rows, path)
    else:
        raise ValueError(f"no figure for protocol {name!r}")


def plot_segmentation(a_mag, phi, minima, rate_hz, path, seconds=10.0):
    """Magnitude with detected boundaries above the match metric, first ``seconds`` only."""
    n = min(len(a_mag), int(seconds * rate_hz))
    t = np.arange(n) / rate_hz
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(WIDTH_IN * 1.4, WIDTH_IN * 0.8))
    ax1.plot(t, a_mag[:n], lw=0.8)
    for m in minima:
        if m < n:
            ax1.axvline(m / rate_hz, color="C3", lw=0.6)
    ax1.set_ylabel(r"$|a|$ (m/s$^2$)")
    k = min(n, len(phi))
    ax2.plot(t[:k], phi[:k], lw=0.8, color="C2")
    ax2.set_ylabel(r"$\varphi$")
    ax2.set_xlabel("time (s)")
    _save(fig, path)
