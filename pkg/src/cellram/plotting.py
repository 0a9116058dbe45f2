"""Plot data and figures for 2D assessments.

Each figure is written next to the CSV it is drawn from, so the numbers
behind every picture stay inspectable.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import UnsupportedDimensionError
from .partition import parse_cell

DENSITY_FILE = "op_density.csv"
LAMBDA_FILE = "lambda.csv"
TYPES_FILE = "cell_types.csv"

STYLE = {
    "figure.figsize": (5.0, 4.2),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "image.origin": "lower",
    "savefig.bbox": "tight",
}

_TYPE_CODES = {"empty": 0, "normal": 1, "cross_boundary": 2}


def _require_2d(part):
    if part.dimension != 2:
        raise UnsupportedDimensionError(f"plot export supports d = 2 only, got d = {part.dimension}")


def write_plot_data(out, part, opm, cells):
    """Density at every cell center, plus lambda and type of assessed cells."""
    _require_2d(part)
    out = Path(out)
    dens, _ = opm.grid(part)
    _write_density(out, part, dens)
    rows = [(a.index, a.cell_type.kind, a.unastuteness.mean) for a in cells]
    _write_cell_rows(out, rows)


def _write_density(out, part, dens):
    centers = part.axis_centers()
    with open(out / DENSITY_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", "density"])
        for i in range(part.cells_per_axis):
            for j in range(part.cells_per_axis):
                w.writerow([i, j, repr(float(centers[i])), repr(float(centers[j])), repr(float(dens[i, j]))])


def _write_cell_rows(out, rows):
    with open(out / LAMBDA_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "lambda_mean"])
        for c, _, lam in rows:
            w.writerow([c[0], c[1], repr(float(lam))])
    with open(out / TYPES_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "type"])
        for c, kind, _ in rows:
            w.writerow([c[0], c[1], kind])


def read_density_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    k = max(int(r["i"]) for r in rows) + 1
    grid = np.zeros((k, k))
    for r in rows:
        grid[int(r["i"]), int(r["j"])] = float(r["density"])
    return grid


def _heat(ax, grid, title, cmap, vmin=None, vmax=None, label=None):
    import matplotlib.pyplot as plt

    im = ax.imshow(grid.T, extent=(0, 1, 0, 1), cmap=cmap, vmin=vmin, vmax=vmax,
                   interpolation="nearest")
    ax.set_title(title)
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    plt.colorbar(im, ax=ax, label=label)


def render_figures(out, part, density, cells_rows, ds=None):
    """Write PNG figures; returns the list of files created."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    k = part.cells_per_axis
    lam = np.full((k, k), np.nan)
    types = np.full((k, k), np.nan)
    for c, kind, value in cells_rows:
        lam[c] = value
        types[c] = _TYPE_CODES[kind]
    written = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        _heat(ax, density, "Operational profile (KDE at cell centers)", "viridis", label="density")
        fig.savefig(out / "op_density.png")
        plt.close(fig)
        written.append(out / "op_density.png")

        fig, ax = plt.subplots()
        _heat(ax, lam, "Cell unastuteness", "magma_r", 0.0, 1.0, label=r"$E[\lambda_i]$")
        fig.savefig(out / "lambda.png")
        plt.close(fig)
        written.append(out / "lambda.png")

        fig, ax = plt.subplots()
        cmap = matplotlib.colors.ListedColormap(["#d9d9d9", "#4c72b0", "#c44e52"])
        im = ax.imshow(types.T, extent=(0, 1, 0, 1), cmap=cmap, vmin=-0.5, vmax=2.5, interpolation="nearest")
        cbar = plt.colorbar(im, ax=ax, ticks=[0, 1, 2])
        cbar.ax.set_yticklabels(["empty", "normal", "cross"])
        ax.set_title("Assessed cell types")
        fig.savefig(out / "cell_types.png")
        plt.close(fig)
        written.append(out / "cell_types.png")

        if ds is not None:
            fig, ax = plt.subplots()
            for label in ds.classes:
                pts = ds.X[ds.y == label]
                ax.scatter(pts[:, 0], pts[:, 1], s=3, label=f"class {label}")
            ax.set_xlim(0, 1)
            ax.set_ylim(0, 1)
            ax.set_aspect("equal")
            ax.legend(loc="upper right", markerscale=3)
            ax.set_title(f"Dataset {ds.name}")
            fig.savefig(out / "dataset.png")
            plt.close(fig)
            written.append(out / "dataset.png")
    return written


def export_plots(report_path, out=None, figures=True):
    """Recreate plot data for a finished run and render it.

    The KDE is refitted from the echoed config and the recorded bandwidth;
    fitting is deterministic, so the densities equal those of the run.
    """
    from .config import RunConfig
    from .opmodel import fit_kde
    from .partition import GridPartition
    from .pipeline import CELLS_FILE, build_dataset, load_report, read_cells_csv

    report = load_report(report_path)
    base = Path(report_path)
    base = base if base.is_dir() else base.parent
    out = Path(out) if out else base
    out.mkdir(parents=True, exist_ok=True)
    data = report.data
    if data["dataset"]["dimension"] != 2:
        raise UnsupportedDimensionError(
            f"plot export supports d = 2 only, got d = {data['dataset']['dimension']}")
    cfg = RunConfig.from_dict(data["config"])
    ds = build_dataset(cfg)
    part = GridPartition(2, data["partition"]["epsilon"])
    opm = fit_kde(ds.X, data["opmodel"]["bandwidth"], seed=cfg.seed, B=cfg.bootstrap_replicas)
    dens, _ = opm.grid(part)
    _write_density(out, part, dens)
    rows = [(parse_cell(r["cell_index"]), r["type"], float(r["lambda_mean"]))
            for r in read_cells_csv(base / data.get("cells_csv", CELLS_FILE))]
    _write_cell_rows(out, rows)
    written = [out / DENSITY_FILE, out / LAMBDA_FILE, out / TYPES_FILE]
    if figures:
        written += render_figures(out, part, dens, rows, ds)
    return written
