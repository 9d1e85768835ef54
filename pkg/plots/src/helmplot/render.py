"""Turn harness CSV files into figures.

The four figure kinds map one-to-one to the harness subcommands that
produce the CSVs (accuracy, qo-surface, gmres, fov).  Fitted slopes and
ridge values are read from the CSV's fit rows and placed in annotations
verbatim: this module never recomputes a number the harness already
reported, so figure and CSV cannot disagree.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("accuracy", "qo-surface", "gmres", "fov")

NORM_LABELS = {
    "rel_l2": "L2",
    "rel_h1k": "H1k",
    "rel_v1": "V1",
    "rel_v2": "V2",
}

FORMULATION_STYLES = {
    "standard": dict(color="tab:blue", marker="s", label="standard"),
    "ls": dict(color="tab:red", marker="o", label="least squares"),
    "ms_third": dict(color="gold", marker="+", label="coercive (A=1/3)"),
    "ms_ksq": dict(color="purple", marker="x", label="coercive (A=k^2)"),
}


class RenderError(RuntimeError):
    """Raised when a CSV does not provide what the figure kind needs."""


@dataclass
class FigureSpec:
    """What to render: input CSVs, figure kind, output path, axis scales."""

    csv_paths: list
    kind: str
    out: str
    xscale: str = "log"
    yscale: str = "log"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RenderError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if isinstance(self.csv_paths, str):
            self.csv_paths = [self.csv_paths]


def load_csv(path):
    """Read one harness CSV, keeping every cell as its raw string.

    Returns (comments, header, rows); rows are dicts keyed by the header.
    """
    comments, lines = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line.rstrip("\n"))
            else:
                lines.append(line)
    if not lines:
        raise RenderError(f"{path}: no header row")
    reader = csv.reader(io.StringIO("".join(lines)))
    table = list(reader)
    header = table[0]
    rows = [dict(zip(header, row)) for row in table[1:] if any(cell != "" for cell in row)]
    return comments, header, rows


def _require(header, columns, path):
    missing = [c for c in columns if c not in header]
    if missing:
        raise RenderError(f"{path}: missing column(s) {', '.join(repr(c) for c in missing)}")


def _floats(rows, key):
    return np.array([float(r[key]) for r in rows])


# ---------------------------------------------------------------------------
# figure kinds

def _render_accuracy(ax, path):
    _, header, rows = load_csv(path)
    _require(header, ["k", "formulation", "rel_h1k"], path)
    data = [r for r in rows if r.get("record", "data") in ("data", "") and r["rel_h1k"] != ""]
    if not data:
        raise RenderError(f"{path}: no data rows")
    series = {}
    for r in data:
        series.setdefault(r["formulation"], []).append(r)
    for form, rws in series.items():
        if form == "best_h1k":
            continue
        style = FORMULATION_STYLES.get(form, dict(marker=".", label=form))
        ax.plot(_floats(rws, "k"), _floats(rws, "rel_h1k"), linestyle="-", **style)
    if "best_h1k" in series:
        rws = series["best_h1k"]
        ax.plot(_floats(rws, "k"), _floats(rws, "rel_h1k"), linestyle="--",
                color="black", marker="*", label="best approximation (H1k)")
    ax.set_xlabel("wavenumber k")
    ax.set_ylabel("relative H1k error")
    ax.legend(fontsize=8)


def _render_qo_surface(ax, path):
    _, header, rows = load_csv(path)
    _require(header, ["record", "k", "h", "qo_ratio", "fit_exponent"], path)
    grid = [r for r in rows if r["record"] == "grid" and r["qo_ratio"] != ""]
    if not grid:
        raise RenderError(f"{path}: no grid rows")
    ks = np.log10(_floats(grid, "k"))
    hs = np.log10(_floats(grid, "h"))
    ratio = np.log10(_floats(grid, "qo_ratio"))
    sc = ax.scatter(hs, ks, c=ratio, s=36, marker="s", cmap="viridis")
    plt.colorbar(sc, ax=ax, label="log10 quasi-optimality ratio")
    ridge = [r for r in rows if r["record"] == "ridge" and r["qo_ratio"] != ""]
    if ridge:
        ax.plot(np.log10(_floats(ridge, "h")), np.log10(_floats(ridge, "k")),
                color="red", marker="o", label="per-k ridge maximum")
        ax.legend(fontsize=8, loc="lower left")
    fit = [r for r in rows if r["record"] == "fit" and r["fit_exponent"] != ""]
    if fit:
        # the annotated exponent is the CSV string, verbatim
        ax.set_title(f"ridge growth ~ k^{fit[0]['fit_exponent']}", fontsize=10)
    ax.set_xlabel("log10 h")
    ax.set_ylabel("log10 k")


def _render_gmres(ax, path):
    _, header, rows = load_csv(path)
    _require(header, ["record", "variant", "weighted", "k", "iterations",
                      "fit_exponent"], path)
    data = [r for r in rows if r["record"] == "data" and r["iterations"] != ""]
    if not data:
        raise RenderError(f"{path}: no data rows")
    fits = {(r["variant"], r.get("tau", ""), r["weighted"]): r["fit_exponent"]
            for r in rows if r["record"] == "fit"}
    groups = {}
    for r in data:
        groups.setdefault((r["variant"], r.get("tau", ""), r["weighted"]), []).append(r)
    for key, rws in sorted(groups.items()):
        variant, tau, weighted = key
        label = f"variant {variant}, tau*={tau}, {'weighted' if weighted == 'true' else 'unweighted'}"
        expo = fits.get(key, "")
        if expo:
            label += f", slope {expo}"
        ax.plot(_floats(rws, "k"), _floats(rws, "iterations"), marker="o", label=label)
    ax.set_xlabel("wavenumber k")
    ax.set_ylabel("iterations to tolerance")
    ax.legend(fontsize=8)


def _render_fov(ax, path):
    _, header, rows = load_csv(path)
    _require(header, ["record", "variant", "k", "cos_sigma", "elman_bound",
                      "observed_iters"], path)
    data = [r for r in rows if r["record"] == "data" and r["cos_sigma"] != ""]
    if not data:
        raise RenderError(f"{path}: no data rows")
    ax2 = ax.twinx()
    variants = sorted({r["variant"] for r in data})
    for variant in variants:
        rws = [r for r in data if r["variant"] == variant]
        ks = _floats(rws, "k")
        ax.plot(ks, _floats(rws, "cos_sigma"), marker="o",
                label=f"cos sigma, variant {variant}")
        bounds = [r for r in rws if r["elman_bound"] != ""]
        if bounds:
            ax2.plot(_floats(bounds, "k"), _floats(bounds, "elman_bound"),
                     linestyle="--", marker="^",
                     label=f"iteration bound, variant {variant}")
        ax2.plot(ks, _floats(rws, "observed_iters"), linestyle=":", marker="v",
                 label=f"observed iterations, variant {variant}")
    ax.set_xlabel("wavenumber k")
    ax.set_ylabel("cos sigma")
    ax2.set_ylabel("iterations")
    ax2.set_yscale("log")
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, fontsize=8)
    return ax2


_RENDERERS = {
    "accuracy": _render_accuracy,
    "qo-surface": _render_qo_surface,
    "gmres": _render_gmres,
    "fov": _render_fov,
}


def render(spec):
    """Render one figure described by a FigureSpec; returns the Figure.

    The output file is only written after every CSV was read successfully,
    so failed renders leave nothing behind.
    """
    fig, axes = plt.subplots(
        1, len(spec.csv_paths), figsize=(6.5 * len(spec.csv_paths), 5.0),
        squeeze=False)
    try:
        for ax, path in zip(axes[0], spec.csv_paths):
            _RENDERERS[spec.kind](ax, path)
            if spec.kind not in ("qo-surface",):
                ax.set_xscale(spec.xscale)
                ax.set_yscale(spec.yscale)
        fig.tight_layout()
        fig.savefig(spec.out, dpi=150)
    except Exception:
        plt.close(fig)
        raise
    return fig
