"""End-to-end assessment: data -> classifier -> separation -> partition ->
operational profile -> per-cell astuteness -> assembled estimate."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import assemble, compare_metrics
from .astuteness import CROSS_BOUNDARY, EMPTY, NORMAL, assess_cells
from .classifier import MlpClassifier, accuracy, load_model, oracle_from_spec, save_model, train_mlp
from .config import RunConfig
from .data import generate_synthetic, load_dataset, split
from .errors import CellRamError
from .opmodel import MAX_ENUMERATED_DIMENSION, fit_kde, rank_cells_by_op
from .partition import GridPartition, format_cell
from .separation import auto_epsilon, estimate_r, validate_cell_size

log = logging.getLogger(__name__)

REPORT_FILE = "report.json"
CELLS_FILE = "cells.csv"
TIMING_FILE = "timing.json"
MODEL_FILE = "model.txt"
CELL_COLUMNS = ("cell_index", "type", "truth", "lambda_mean", "lambda_var", "op_mean", "op_var")


class StageError(CellRamError):
    """Wraps a failure with the name of the pipeline stage it came from."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"stage '{stage}' failed: {cause}")


class _Stages:
    def __init__(self):
        self.seconds = {}

    def run(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except CellRamError as exc:
            raise StageError(name, exc) from exc
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - start


@dataclass
class ReliabilityReport:
    """Everything an assessment run produced. ``data`` is the deterministic
    JSON document, ``timing`` the wall-clock figures kept beside it."""

    data: dict
    timing: dict = field(default_factory=dict)
    cells: list = field(default_factory=list)

    @property
    def estimate(self):
        return self.data["estimate"]

    @property
    def seconds_per_cell(self):
        return self.timing.get("seconds_per_cell")

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"


def build_dataset(cfg: RunConfig):
    if cfg.dataset_path is not None:
        return load_dataset(cfg.dataset_path)
    return generate_synthetic(cfg.synthetic_family, cfg.n_points, cfg.seed)


def build_classifier(cfg: RunConfig, train):
    spec = cfg.classifier
    if spec["kind"] == "mlp":
        return train_mlp(train, hidden=int(spec.get("hidden", 16)), epochs=int(spec.get("epochs", 200)),
                         learning_rate=float(spec.get("learning_rate", 0.1)), seed=cfg.seed,
                         batch_size=int(spec.get("batch_size", 32)))
    if spec["kind"] == "file":
        return load_model(spec["path"])
    return oracle_from_spec(spec["oracle"], train.dimension)


def choose_epsilon(cfg: RunConfig, sep):
    if cfg.epsilon == "auto":
        return auto_epsilon(sep, cfg.epsilon_reference)
    return float(cfg.epsilon)


def fit_opmodel(cfg: RunConfig, ds, bandwidth=None):
    h = bandwidth if bandwidth is not None else cfg.bandwidth
    return fit_kde(ds.X, h, seed=cfg.seed, B=cfg.bootstrap_replicas)


def _chunks(seq, size):
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def cmd_assess(cfg: RunConfig, out_dir=None, write=True) -> ReliabilityReport:
    stages = _Stages()
    t0 = time.perf_counter()
    out = Path(out_dir or cfg.output_dir)

    ds = stages.run("load", build_dataset, cfg)
    train, test = stages.run("split", split, ds, cfg.test_fraction, cfg.seed)
    model = stages.run("train", build_classifier, cfg, train)
    train_error = 1.0 - accuracy(model, train)
    test_error = 1.0 - accuracy(model, test)
    log.info("classifier: train error %.4f, test error %.4f", train_error, test_error)

    sep = stages.run("separation", estimate_r, ds)
    epsilon = choose_epsilon(cfg, sep)
    check = stages.run("cell-size", validate_cell_size, sep, epsilon, cfg.epsilon_reference)
    if not check.ok:
        log.warning("epsilon %.6g is not below %s=%.6g; cross-boundary cells may appear",
                    epsilon, cfg.epsilon_reference, check.max_epsilon)
    part = GridPartition(ds.dimension, epsilon)

    opm = stages.run("kde", fit_opmodel, cfg, ds)
    ranking = stages.run("rank", rank_cells_by_op, opm, part, cfg.op_threshold, cfg.max_cells, cfg.cell_budget)
    log.info("%d cells cover %.4f of %.4f enumerated OP mass", len(ranking), ranking.covered_mass,
             ranking.total_mass)

    groups = part.group_points(ds)
    labels_by_cell = {c: {int(ds.y[i]) for i in idx} for c, idx in groups.items()}
    chunks = _chunks(list(ranking), cfg.chunk_cells)

    def work(chunk):
        return assess_cells(model, chunk, labels_by_cell, part, cfg.samples_per_cell, cfg.vote_n, cfg.seed)

    def assess_all():
        with ThreadPoolExecutor(max_workers=cfg.worker_count) as pool:
            return [a for res in pool.map(work, chunks) for a in res]

    t_assess = time.perf_counter()
    cells = stages.run("assess", assess_all)
    assess_seconds = time.perf_counter() - t_assess

    estimate = stages.run("assemble", assemble, cells, cfg.alpha, ranking.remainder_mass, cfg.remainder_policy)
    comparison = compare_metrics(test_error, estimate)

    type_counts = {NORMAL: 0, EMPTY: 0, CROSS_BOUNDARY: 0}
    for a in cells:
        type_counts[a.cell_type.kind] += 1
    occupied_assessed = type_counts[NORMAL] + type_counts[CROSS_BOUNDARY]
    low_margin = sum(1 for a in cells if a.cell_type.kind == EMPTY and a.cell_type.vote_margin < 0.75)

    data = {
        "tool": "cellram",
        "version": __version__,
        "dataset": {"name": ds.name, "n": ds.n, "dimension": ds.dimension, "classes": list(ds.classes),
                    "n_train": train.n, "n_test": test.n},
        "classifier": {"kind": cfg.classifier["kind"], "train_error": train_error, "test_error": test_error},
        "separation": {"d_min": sep.d_min, "r_hat": sep.r_hat, "witness": [list(w) for w in sep.witness],
                       "epsilon_reference": cfg.epsilon_reference, "epsilon_status": check.status,
                       "max_epsilon": check.max_epsilon},
        "partition": {"epsilon": epsilon, "cells_per_axis": part.cells_per_axis, "grid": list(part.shape),
                      "cell_count": part.cell_count, "cell_volume": part.cell_volume,
                      "integral_grid": part.integral},
        "opmodel": {"bandwidth": opm.h, "bootstrap_replicas": opm.replicas,
                    "enumerated_mass": ranking.total_mass, "enumerated_cells": ranking.enumerated,
                    "exhaustive": ranking.exhaustive, "op_mass_covered": estimate.op_mass_covered},
        "cell_types": {**type_counts, "occupied_cells": len(groups),
                       "occupied_assessed": occupied_assessed, "low_margin_empty": low_margin},
        "estimate": estimate.to_dict(),
        "comparison": comparison.to_dict(),
        "cells_csv": CELLS_FILE,
        "config": cfg.to_dict(include_runtime=False),
    }
    timing = {
        "seconds_total": time.perf_counter() - t0,
        "seconds_per_cell": assess_seconds / max(len(cells), 1),
        "threads": cfg.worker_count,
        "stages": stages.seconds,
    }
    report = ReliabilityReport(data, timing, cells)
    if write:
        stages.run("write", write_outputs, report, out, model, part, opm)
    return report


def write_cells_csv(cells, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CELL_COLUMNS)
        for a in cells:
            w.writerow([format_cell(a.index), a.cell_type.kind, "" if a.truth is None else a.truth,
                        repr(a.unastuteness.mean), repr(a.unastuteness.variance),
                        repr(a.op.mean), repr(a.op.variance)])


def read_cells_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_outputs(report: ReliabilityReport, out: Path, model, part, opm):
    from .plotting import write_plot_data

    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_FILE).write_text(report.to_json())
    (out / TIMING_FILE).write_text(json.dumps(report.timing, indent=2, sort_keys=True) + "\n")
    write_cells_csv(report.cells, out / CELLS_FILE)
    if isinstance(model, MlpClassifier):
        save_model(model, out / MODEL_FILE)
    if part.dimension == 2:
        write_plot_data(out, part, opm, report.cells)


def load_report(path) -> ReliabilityReport:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_FILE
    data = json.loads(path.read_text())
    timing_path = path.parent / TIMING_FILE
    timing = json.loads(timing_path.read_text()) if timing_path.exists() else {}
    return ReliabilityReport(data, timing)


@dataclass
class Diagnostics:
    warnings: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.warnings

    def summary(self) -> str:
        lines = [f"{k}: {v}" for k, v in self.info.items()]
        lines += [f"WARNING: {w}" for w in self.warnings]
        lines.append("ok" if self.ok else f"{len(self.warnings)} warning(s)")
        return "\n".join(lines)


def cmd_validate(cfg: RunConfig) -> Diagnostics:
    """Dry run: check the cell size, cell count and OP coverage without
    assessing any cell."""
    diag = Diagnostics()
    ds = build_dataset(cfg)
    sep = estimate_r(ds)
    epsilon = choose_epsilon(cfg, sep)
    check = validate_cell_size(sep, epsilon, cfg.epsilon_reference)
    part = GridPartition(ds.dimension, epsilon)
    diag.info.update(d_min=sep.d_min, r_hat=sep.r_hat, epsilon=epsilon, dimension=ds.dimension,
                     cell_count=part.cell_count)
    if not check.ok:
        diag.warnings.append(f"epsilon {epsilon:.6g} is too large; must be < {check.max_epsilon:.6g} "
                             f"({check.reference})")
    if not part.integral:
        diag.warnings.append(f"1/epsilon = {1 / epsilon:.6g} is not an integer; last cell per axis is truncated")
    if part.cell_count > cfg.cell_budget:
        diag.warnings.append(f"grid has {part.cell_count:.3g} cells, above the budget of {cfg.cell_budget:.3g}")
    enumerable = part.dimension <= MAX_ENUMERATED_DIMENSION and part.cell_count <= cfg.cell_budget
    if enumerable:
        opm = fit_opmodel(cfg, ds)
        dens, _ = opm.grid(part)
        mass = float(dens.sum() * part.cell_volume)
        diag.info.update(bandwidth=opm.h, enumerated_mass=mass)
        if mass < 0.95:
            diag.warnings.append(f"KDE mass inside the unit box is only {mass:.4f}")
    cells = part.cell_count if cfg.max_cells is None else min(cfg.max_cells, part.cell_count)
    diag.info["max_sample_budget"] = cells * cfg.samples_per_cell
    return diag
