"""Figure rendering for experiment output.

The rates CSV is the data contract; this module consumes it and writes
rejection-rate-versus-lag-depth figures next to it, one per density, with
the nominal level and its binomial three-sigma band for reference.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_STYLE = {
    ("gaussian", ""): dict(color="tab:blue", marker="o", label="Gaussian"),
    ("rank", "vdw"): dict(color="tab:red", marker="s", label="van der Waerden"),
    ("rank", "spearman"): dict(color="tab:green", marker="^", label="Spearman"),
    ("rank", "sign"): dict(color="tab:orange", marker="d", label="sign"),
}


def load_rates_csv(path: str) -> list:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def render_rate_figures(csv_path: str, out_dir: str | None = None,
                        level: float = 0.05, stem: str | None = None) -> list:
    """One PNG per density found in the rates CSV.

    Returns the list of written file paths.
    """
    rows = load_rates_csv(csv_path)
    if out_dir is None:
        out_dir = os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(out_dir, exist_ok=True)
    if stem is None:
        stem = os.path.splitext(os.path.basename(csv_path))[0]
    densities = sorted({r["density"] for r in rows})
    written = []
    for dens in densities:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        sub = [r for r in rows if r["density"] == dens]
        curves = sorted({(r["method"], r["scores"]) for r in sub})
        n_max = 0
        for key in curves:
            pts = sorted((int(r["m"]), float(r["rate"]), int(r["N"]))
                         for r in sub if (r["method"], r["scores"]) == key)
            ms = [p[0] for p in pts]
            rates = [p[1] for p in pts]
            n_max = max(n_max, max(p[2] for p in pts))
            style = _STYLE.get(key, dict(marker="x", label="/".join(filter(None, key))))
            ax.plot(ms, rates, lw=1.4, **style)
        ax.axhline(level, color="0.4", lw=0.8, ls="--")
        if n_max:
            band = 3.0 * (level * (1 - level) / n_max) ** 0.5
            ax.axhspan(level - band, level + band, color="0.85", zorder=0)
        ax.set_xlabel("lag depth m")
        ax.set_ylabel("rejection rate")
        ax.set_title(dens.replace("_", " "))
        ax.set_ylim(bottom=0.0)
        ax.legend(frameon=False, fontsize=9)
        fig.tight_layout()
        out = os.path.join(out_dir, f"{stem}_{dens}.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        written.append(out)
    return written
