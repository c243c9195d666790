"""Self-contained SVG rendering of local P-P plots."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["pp_plot_svg"]

_RC = {"svg.hashsalt": "cdediag", "svg.fonttype": "none", "font.size": 9}


def pp_plot_svg(band, path, title=None):
    """Write the diagonal, the estimated curve and the shaded null band."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(3.6, 3.6))
        ax.fill_between(band.levels, band.lower, band.upper, color="0.82", lw=0,
                        label=f"{band.confidence:.0%} null band")
        ax.plot([0, 1], [0, 1], color="0.4", ls="--", lw=0.8)
        ax.plot(band.levels, band.estimate, color="C3", marker="o", ms=2.5, lw=1.2,
                label="estimated coverage")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_aspect("equal")
        ax.set_xlabel(r"$\alpha$")
        ax.set_ylabel(r"$\hat r_\alpha(x)$")
        point = ", ".join(f"{v:.3g}" for v in band.point)
        ax.set_title(title or f"x = ({point}): {band.label}")
        ax.legend(loc="upper left", frameon=False, fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
