"""Run configuration: one JSON document holding every pipeline parameter."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .assembly import REMAINDER_POLICIES
from .data import SYNTHETIC_FAMILIES
from .errors import ConfigError

# Fields that affect only how a run executes, not what it computes. They are
# left out of the config echoed into reports.
RUNTIME_FIELDS = ("threads", "output_dir")


def _default_classifier():
    return {"kind": "mlp", "hidden": 16, "epochs": 200, "learning_rate": 0.1, "batch_size": 32}


@dataclass
class RunConfig:
    dataset_path: str | None = None
    synthetic_family: str = "two_blob"
    n_points: int = 2000
    test_fraction: float = 0.25
    classifier: dict = field(default_factory=_default_classifier)
    epsilon: float | str = "auto"
    epsilon_reference: str = "r_hat"
    bandwidth: float | str = "auto"
    samples_per_cell: int = 10_000
    vote_n: int = 101
    bootstrap_replicas: int = 100
    alpha: float = 0.025
    op_threshold: float = 0.99
    max_cells: int | None = None
    remainder_policy: str = "worst_case"
    seed: int = 0
    cell_budget: int = 10_000_000
    chunk_cells: int = 64
    threads: int | None = None
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        if self.dataset_path is None:
            need(self.synthetic_family in SYNTHETIC_FAMILIES,
                 f"synthetic_family must be one of {sorted(SYNTHETIC_FAMILIES)}")
            need(isinstance(self.n_points, int) and self.n_points >= 10, "n_points must be an integer >= 10")
        need(0 < self.test_fraction < 1, "test_fraction must be in (0, 1)")
        need(isinstance(self.classifier, dict) and self.classifier.get("kind") in ("mlp", "oracle", "file"),
             "classifier.kind must be 'mlp', 'oracle' or 'file'")
        if self.classifier["kind"] == "oracle":
            need(isinstance(self.classifier.get("oracle"), dict), "classifier.oracle must be a mapping")
        if self.classifier["kind"] == "file":
            need(isinstance(self.classifier.get("path"), str), "classifier.path must be a string")
        need(self.epsilon == "auto" or (_is_real(self.epsilon) and 0 < self.epsilon <= 1),
             "epsilon must be 'auto' or a number in (0, 1]")
        need(self.epsilon_reference in ("r_hat", "d_min"), "epsilon_reference must be 'r_hat' or 'd_min'")
        need(self.bandwidth == "auto" or (_is_real(self.bandwidth) and self.bandwidth > 0),
             "bandwidth must be 'auto' or a positive number")
        need(isinstance(self.samples_per_cell, int) and self.samples_per_cell >= 30, "samples_per_cell must be >= 30")
        need(isinstance(self.vote_n, int) and self.vote_n >= 1 and self.vote_n % 2 == 1,
             "vote_n must be a positive odd integer")
        need(isinstance(self.bootstrap_replicas, int) and self.bootstrap_replicas >= 2,
             "bootstrap_replicas must be >= 2")
        need(_is_real(self.alpha) and 0 < self.alpha < 0.5, "alpha must be in (0, 0.5)")
        need(_is_real(self.op_threshold) and 0 < self.op_threshold <= 1, "op_threshold must be in (0, 1]")
        need(self.max_cells is None or (isinstance(self.max_cells, int) and self.max_cells >= 1),
             "max_cells must be null or a positive integer")
        need(self.remainder_policy in REMAINDER_POLICIES, f"remainder_policy must be one of {REMAINDER_POLICIES}")
        need(isinstance(self.seed, int), "seed must be an integer")
        need(isinstance(self.cell_budget, int) and self.cell_budget >= 1, "cell_budget must be a positive integer")
        need(isinstance(self.chunk_cells, int) and self.chunk_cells >= 1, "chunk_cells must be a positive integer")
        need(self.threads is None or (isinstance(self.threads, int) and self.threads >= 1),
             "threads must be null or a positive integer")

    @property
    def worker_count(self) -> int:
        return self.threads or os.cpu_count() or 1

    def to_dict(self, include_runtime=True) -> dict:
        d = asdict(self)
        if not include_runtime:
            for key in RUNTIME_FIELDS:
                d.pop(key)
        return d

    def to_json(self, include_runtime=True) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(text)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)
