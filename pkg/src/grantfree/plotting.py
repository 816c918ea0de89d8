"""Optional PNG rendering of a result table (the CSV stays the contract)."""

from __future__ import annotations

import math

PANELS = (("p_md_plus_fa", "P_md + P_fa", True), ("nmse_db", "NMSE (dB)", False), ("bler", "BLER", True))


def plot_results(rows: list[dict], path, sweep_label="sweep value"):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    schemes = list(dict.fromkeys(r["scheme"] for r in rows))
    fig, axes = plt.subplots(1, len(PANELS), figsize=(4.2 * len(PANELS), 3.4))
    for ax, (key, label, log) in zip(axes, PANELS):
        for scheme in schemes:
            pts = [(r["sweep_value"], r[key]) for r in rows if r["scheme"] == scheme]
            xs = [0 if x is None else x for x, _ in pts]
            ys = [y for _, y in pts]
            if log:
                # zero error rates cannot be drawn on a log axis
                ys = [y if y > 0 else math.nan for y in ys]
            ax.plot(xs, ys, marker="o", label=scheme)
        if log:
            ax.set_yscale("log")
        ax.set_xlabel(sweep_label)
        ax.set_ylabel(label)
        ax.grid(True, which="both", alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
