"""SVG figure rendering for the experiment reports.

All figures go through matplotlib's Agg backend with a pinned hash salt and
no embedded creation date, so a given input renders to byte-identical SVG.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import EmptyError, InputError

_SVG_SALT = "psyprobe"

PLOT_KINDS = ("heatmap", "curve", "bar", "scatter")


def _new_figure():
    plt.rcParams["svg.hashsalt"] = _SVG_SALT
    plt.rcParams["svg.fonttype"] = "path"
    return plt.subplots(figsize=(6.0, 4.5))


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path


def render_plot(data: dict, kind: str, out_path) -> Path:
    """Render one figure; `data` keys depend on kind.

    heatmap: values (2D), [title, colorbar_label]
    curve:   x, series {label: [y]}, [xlabel, ylabel, title]
    bar:     labels, values, [xlabel, ylabel, title]
    scatter: points [(x, y)], [baseline_points, xlabel, ylabel, title]
    """
    if kind not in PLOT_KINDS:
        raise InputError(f"unknown plot kind {kind!r}")
    if not data:
        raise EmptyError("no data to plot")
    fig, ax = _new_figure()
    try:
        if kind == "heatmap":
            values = np.asarray(data["values"], dtype=np.float64)
            if values.size == 0:
                raise EmptyError("heatmap has no cells")
            im = ax.imshow(values, cmap="viridis", interpolation="nearest")
            fig.colorbar(im, ax=ax, label=data.get("colorbar_label", "probability"))
        elif kind == "curve":
            series = data.get("series") or {}
            x = data.get("x") or []
            if not series or not len(x):
                raise EmptyError("curve has no points")
            for label in sorted(series):
                ax.plot(x, series[label], marker="o", label=label)
            if len(series) > 1 or any(series):
                ax.legend()
            ax.grid(True, linestyle="--", alpha=0.5)
        elif kind == "bar":
            labels = data.get("labels") or []
            values = data.get("values") or []
            if not labels:
                raise EmptyError("bar chart has no bars")
            ax.bar(range(len(labels)), values)
            ax.set_xticks(range(len(labels)))
            ax.set_xticklabels([str(l) for l in labels], rotation=30, ha="right")
        elif kind == "scatter":
            points = data.get("points") or []
            if not points:
                raise EmptyError("scatter has no points")
            xs, ys = zip(*points)
            ax.scatter(xs, ys, marker="o", label="decoys")
            baseline = data.get("baseline_points") or []
            if baseline:
                bx, by = zip(*baseline)
                ax.scatter(bx, by, marker="x", color="red", label="gaussian baseline")
            ax.legend()
            ax.grid(True, linestyle="--", alpha=0.5)
        if data.get("xlabel"):
            ax.set_xlabel(data["xlabel"])
        if data.get("ylabel"):
            ax.set_ylabel(data["ylabel"])
        if data.get("title"):
            ax.set_title(data["title"])
        fig.tight_layout()
        return _save(fig, out_path)
    except Exception:
        plt.close(fig)
        raise


def spatial_heatmap_data(pmap) -> dict:
    """Arrange a sparse/dense probability map into a row-major value grid."""
    xs = sorted({pos.x for pos in pmap.positions})
    ys = sorted({pos.y for pos in pmap.positions})
    grid = np.full((len(ys), len(xs)), np.nan)
    xi = {x: i for i, x in enumerate(xs)}
    yi = {y: i for i, y in enumerate(ys)}
    for pos, value in zip(pmap.positions, pmap.values):
        grid[yi[pos.y], xi[pos.x]] = value
    return {"values": grid.tolist(), "title": f"placement map ({pmap.patch_id})"}
