"""Optional PNG figures for the CSV tables written by the command line."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _decay(ax, rows):
    first = min(r["m"] for r in rows)
    for m in sorted({r["m"] for r in rows}):
        for N in sorted({r["N"] for r in rows if r["m"] == m}):
            sel = [r for r in rows if r["m"] == m and r["N"] == N]
            t = np.array([N * r["rho"] for r in sel])
            v = np.array([abs(r["value"]) / N ** 3 for r in sel])
            env = np.array([r["envelope"] / N ** 3 for r in sel])
            keep = t > 0
            if m == first:
                ax.loglog(t[keep], v[keep], "o", ms=3, label=f"|K|/N^3, N={N:g}")
            ax.loglog(t[keep], env[keep], "-", lw=1, label=f"envelope m={m}, N={N:g}")
    ax.set_xlabel("N rho")
    ax.set_ylabel("|kernel| / N^3")


def _terms(ax, rows):
    for key in sorted({(r["N"], r["rho"]) for r in rows}):
        sel = [r for r in rows if (r["N"], r["rho"]) == key]
        n = [r["n"] for r in sel]
        ax.semilogy(n, [abs(r["value"]) for r in sel], "o-", label=f"N={key[0]:g}, rho={key[1]:.2g}")
        ax.semilogy(n, [r["envelope"] for r in sel], "k:", lw=1)
    ax.set_xlabel("Born order n")
    ax.set_ylabel("|term|")


def _norms(ax, rows):
    if rows and "p" in rows[0]:
        for pq in sorted({(r["p"], r["q"]) for r in rows}):
            sel = [r for r in rows if (r["p"], r["q"]) == pq]
            ax.loglog([r["N"] for r in sel], [r["norm_lower_bound"] for r in sel], "o-",
                      label=f"p={pq[0]:g}, q={pq[1]:g}")
        ax.set_xlabel("N")
        ax.set_ylabel("operator norm (lower bound)")
    else:
        n = [r["n"] for r in rows]
        ax.semilogy(n, [r["norm"] for r in rows], "o-", label="norm")
        ax.semilogy(n, [r["bound"] for r in rows], "k:", label="bound")
        ax.set_xlabel("n")


def _ratios(ax, rows):
    w = [r["width"] for r in rows]
    ax.semilogx(w, [r["ratio"] for r in rows], "o-", label="projected family")
    if "ratio_unprojected" in rows[0]:
        ax.semilogx(w, [r["ratio_unprojected"] for r in rows], "s--", label="unprojected")
    ax.set_xlabel("width")
    ax.set_ylabel("norm ratio")


def _profile(ax, rows):
    ax.semilogx([r["a"] for r in rows], [r["kato_integral"] for r in rows])
    ax.set_xlabel("a")
    ax.set_ylabel("Kato integral at a")


PLOTTERS = {"decay": _decay, "terms": _terms, "norms": _norms, "ratios": _ratios,
            "profile": _profile}


def write_figures(name: str, results, tables: dict, out) -> list[Path]:
    """Render one PNG per table that has a known layout; return the paths written."""
    out = Path(out)
    written = []
    for tname, rows in tables.items():
        plot = PLOTTERS.get(tname)
        if plot is None or not rows:
            continue
        fig, ax = plt.subplots(figsize=(6, 4.5))
        try:
            plot(ax, rows)
            if ax.get_legend_handles_labels()[0]:
                ax.legend(fontsize=7)
            ax.set_title(f"{name}: {tname}")
            path = out / f"{name}_{tname}.png"
            fig.savefig(path, dpi=110, bbox_inches="tight")
            written.append(path)
        finally:
            plt.close(fig)
    return written
