"""Static SVG figures: achieved blood volume and dose versus time."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed element ids and no date stamp keep the SVG byte-reproducible.
_RC = {"svg.hashsalt": "resus-rl", "svg.fonttype": "none"}


def render_svg(logs, path, bv_target: float | None = None, title: str | None = None) -> Path:
    """Two stacked panels (BV with target line; dose) with one line per log.

    Each log's ``controller`` attribute becomes its legend label.
    """
    path = Path(path)
    with plt.rc_context(_RC):
        fig, (ax_bv, ax_dose) = plt.subplots(2, 1, figsize=(7.0, 6.0), sharex=True)
        for log in logs:
            t = log.t
            ax_bv.plot(t, log.bv_true / 1000.0, label=log.controller)
            ax_dose.step(t, log.doses, where="post", label=log.controller)
        if bv_target is not None:
            ax_bv.axhline(bv_target / 1000.0, color="k", linestyle="--", linewidth=0.8, label="target")
        ax_bv.set_ylabel("Blood volume (L)")
        ax_dose.set_ylabel("Dose (mL/kg/h)")
        ax_dose.set_xlabel("Time (min)")
        ax_dose.set_ylim(-1, 26)
        ax_bv.legend(loc="lower right")
        ax_dose.legend(loc="upper right")
        if title:
            ax_bv.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
