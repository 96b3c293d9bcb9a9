"""Report figures rendered next to the delimited outputs."""

from __future__ import annotations

import io

import numpy as np

from ._io import atomic_bytes
from .metrics import MetricsReport


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110, bbox_inches="tight")
    atomic_bytes(path, buf.getvalue())


def save_classification_figure(rows, path, thresholds=(0.009, 0.979)) -> None:
    """Scatter of veil fraction vs ellipticity, colored by prediction.

    `rows` are dicts with S1, S3 and predicted keys; threshold guide lines
    are drawn when given.
    """
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    styles = {"melanoma": dict(c="#c0392b", marker="x"),
              "benign": dict(c="#1e8449", marker="o")}
    rows = list(rows)
    for label, style in styles.items():
        xs = [float(r["S1"]) for r in rows if r["predicted"] == label]
        ys = [float(r["S3"]) for r in rows if r["predicted"] == label]
        ax.scatter(xs, ys, s=28, label=f"predicted {label}", **style)
    if thresholds is not None:
        ax.axvline(thresholds[0], ls="--", lw=1, c="0.4")
        ax.axhline(thresholds[1], ls="--", lw=1, c="0.4")
    ax.set_xlabel("veil area fraction S1")
    ax.set_ylabel("ellipticity S3")
    ax.set_ylim(-0.02, 1.05)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title(f"lesion classification ({len(rows)} images)")
    _save(fig, path)
    plt.close(fig)


def save_metrics_figure(report: MetricsReport, path, positive="melanoma") -> None:
    """Confusion-matrix heatmap with the derived rates in the title."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.4, 4.0))
    m = np.array([[report.tp, report.fn], [report.fp, report.tn]], dtype=float)
    ax.imshow(m, cmap="Blues", vmin=0)
    for (i, j), v in np.ndenumerate(m):
        ax.text(j, i, str(int(v)), ha="center", va="center",
                color="black" if v < m.max() * 0.6 else "white")
    ax.set_xticks([0, 1], [f"pred {positive}", "pred other"])
    ax.set_yticks([0, 1], [f"true {positive}", "true other"])

    def pct(v):
        return "n/a" if v is None else f"{100 * v:.2f}%"

    ax.set_title(f"sensitivity {pct(report.sensitivity)}  "
                 f"specificity {pct(report.specificity)}\n"
                 f"accuracy {pct(report.accuracy)}", fontsize=10)
    _save(fig, path)
    plt.close(fig)
