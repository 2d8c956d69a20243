"""Synthetic regression tasks and seeded experiment grids.

Two tasks: the size of the largest monochromatic connected subgraph of a
5x5 grid with deleted edges, and the hop distance between two marked nodes
of a Watts-Strogatz graph.  Node inputs are the first ``APE_DIM`` nontrivial
Laplacian eigenvectors (zero-padded), concatenated with one-hot colours or
with source/target indicator channels.  The same eigenvectors, truncated to
``m`` columns, serve as WIRE coordinates.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import (
    Graph,
    gen_grid_deleted,
    gen_watts_strogatz,
    largest_monochromatic_subgraph,
    laplacian,
    shortest_path_distance,
)
from .nn.model import ModelConfig
from .nn.train import normalized_rmse, train
from .rng import Rng, as_rng
from .spectral import Variant, eig_dense, spectral_features

__all__ = [
    "Task",
    "TaskExample",
    "Dataset",
    "ExperimentGrid",
    "APE_DIM",
    "spectral_inputs",
    "build_mono_dataset",
    "build_spd_dataset",
    "normalized_rmse",
    "run_grid",
    "std_err",
    "dataset_digest",
]

APE_DIM = 10
MAX_PAIR_RESAMPLES = 100


class Task(str, enum.Enum):
    MONO = "mono"
    SPD = "spd"


@dataclass(frozen=True)
class TaskExample:
    graph: Graph
    coords: np.ndarray        # (N, APE_DIM) raw nontrivial eigenvectors, zero-padded
    inputs: np.ndarray        # (N, APE_DIM + extra channels)
    label: float
    source: int | None = None
    target: int | None = None

    def to_dict(self) -> dict:
        d = {"graph": self.graph.to_dict(), "label": self.label}
        if self.source is not None:
            d["source"] = self.source
            d["target"] = self.target
        return d


@dataclass
class Dataset:
    task: Task
    train: list[TaskExample]
    test: list[TaskExample]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"task": self.task.value, "meta": self.meta,
                "train": [ex.to_dict() for ex in self.train],
                "test": [ex.to_dict() for ex in self.test]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> Dataset:
        task = Task(d["task"])
        meta = d.get("meta", {})
        n_colors = meta.get("n_colors", 3)
        rebuild = (lambda e: _example_from_dict(task, e, n_colors))
        return cls(task, [rebuild(e) for e in d["train"]], [rebuild(e) for e in d["test"]], meta)

    @classmethod
    def from_json(cls, s: str) -> Dataset:
        return cls.from_dict(json.loads(s))


def spectral_inputs(g: Graph, dim: int = APE_DIM) -> np.ndarray:
    """First ``dim`` nontrivial raw eigenvectors, zero-padded on small graphs."""
    spec = eig_dense(laplacian(g), min(g.n, dim + 1))
    return spectral_features(spec, Variant.RAW, skip_trivial=True).padded(dim)


def _mono_example(g: Graph, n_colors: int) -> TaskExample:
    coords = spectral_inputs(g)
    onehot = np.eye(n_colors)[g.colors]
    return TaskExample(g, coords, np.concatenate([coords, onehot], axis=1),
                       float(largest_monochromatic_subgraph(g)))


def _spd_example(g: Graph, s: int, t: int) -> TaskExample:
    coords = spectral_inputs(g)
    marks = np.zeros((g.n, 2))
    marks[s, 0] = 1.0
    marks[t, 1] = 1.0
    dist = shortest_path_distance(g, s, t)
    if dist is None:
        raise ValueError("unreachable source/target pair")
    return TaskExample(g, coords, np.concatenate([coords, marks], axis=1), float(dist), s, t)


def _example_from_dict(task: Task, d: dict, n_colors: int) -> TaskExample:
    g = Graph.from_dict(d["graph"])
    ex = _mono_example(g, n_colors) if task is Task.MONO else _spd_example(g, d["source"], d["target"])
    if ex.label != d["label"]:
        raise ValueError(f"stored label {d['label']} disagrees with recomputed {ex.label}")
    return ex


def _recheck(examples, oracle):
    for i, ex in enumerate(examples):
        want = oracle(ex)
        if ex.label != want:
            raise RuntimeError(f"example {i}: label {ex.label} disagrees with oracle {want}")


def _mono_one(rng: Rng, rows: int, cols: int, n_delete: int, n_colors: int) -> TaskExample:
    g = gen_grid_deleted(rows, cols, n_delete, rng.child("graph"))
    colors = rng.child("colors").integers(0, n_colors, size=g.n)
    return _mono_example(g.with_colors(colors), n_colors)


def build_mono_dataset(n_train: int, n_test: int, n_delete: int, n_colors: int = 3,
                       rng: Rng | int | None = None, rows: int = 5, cols: int = 5) -> Dataset:
    """Grid graphs with ``n_delete`` edges removed and uniformly random colours."""
    if min(n_train, n_test, n_colors, rows, cols) < 1:
        raise ValueError("dataset parameters must be positive")
    rng = as_rng(rng)
    tr, te = rng.child("train"), rng.child("test")
    train_ex = [_mono_one(tr.child(i), rows, cols, n_delete, n_colors) for i in range(n_train)]
    test_ex = [_mono_one(te.child(i), rows, cols, n_delete, n_colors) for i in range(n_test)]
    _recheck(train_ex + test_ex, lambda ex: largest_monochromatic_subgraph(ex.graph))
    meta = {"rows": rows, "cols": cols, "n_delete": n_delete, "n_colors": n_colors}
    return Dataset(Task.MONO, train_ex, test_ex, meta)


def _spd_one(rng: Rng, n: int, k: int, p: float) -> TaskExample:
    for attempt in range(10_000):
        g = gen_watts_strogatz(n, k, p, rng.child(f"graph{attempt}"))
        pairs = rng.child(f"pair{attempt}")
        for _ in range(MAX_PAIR_RESAMPLES):
            s, t = (int(x) for x in pairs.choice(n, size=2, replace=False))
            if shortest_path_distance(g, s, t) is not None:
                return _spd_example(g, s, t)
    raise RuntimeError("could not sample a reachable source/target pair")


def build_spd_dataset(n_train: int, n_test: int, rng: Rng | int | None = None,
                      n: int = 10, k: int = 2, p: float = 0.6) -> Dataset:
    """Watts-Strogatz graphs with a uniformly chosen reachable ``source != target`` pair.

    Unreachable pairs are redrawn up to ``MAX_PAIR_RESAMPLES`` times, then the
    graph itself is redrawn.
    """
    if min(n_train, n_test) < 1:
        raise ValueError("dataset sizes must be positive")
    rng = as_rng(rng)
    tr, te = rng.child("train"), rng.child("test")
    train_ex = [_spd_one(tr.child(i), n, k, p) for i in range(n_train)]
    test_ex = [_spd_one(te.child(i), n, k, p) for i in range(n_test)]
    _recheck(train_ex + test_ex, lambda ex: shortest_path_distance(ex.graph, ex.source, ex.target))
    return Dataset(Task.SPD, train_ex, test_ex, {"n": n, "k": k, "p": p})


def dataset_digest(ds: Dataset) -> str:
    return hashlib.sha256(ds.to_json().encode()).hexdigest()


def std_err(values: Sequence[float]) -> float:
    """Sample standard deviation over sqrt(count); zero for a single value."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(len(v)))


@dataclass(frozen=True)
class ExperimentGrid:
    task: Task
    m_values: tuple[int, ...] = (0, 3, 5, 10)
    delete_values: tuple[int, ...] = (0, 5, 10, 15)
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    n_train: int = 2000
    n_test: int = 500
    epochs: int = 100
    batch_size: int = 16
    n_colors: int = 3
    base_lr: float = 2e-4

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        if not self.m_values or not self.seeds:
            raise ValueError("experiment grid is empty")
        if self.task is Task.MONO and not self.delete_values:
            raise ValueError("mono grid needs deletion counts")

    def cells(self) -> list[tuple[int, int, int]]:
        """(m, n_delete, seed) triples; ``n_delete`` is -1 for the SPD task."""
        dels = self.delete_values if self.task is Task.MONO else (-1,)
        return [(m, nd, s) for nd in dels for m in self.m_values for s in self.seeds]


def _dataset_for(grid: ExperimentGrid, n_delete: int, seed: int) -> Dataset:
    data_rng = Rng(seed).child("data")
    if grid.task is Task.MONO:
        return build_mono_dataset(grid.n_train, grid.n_test, n_delete, grid.n_colors, data_rng)
    return build_spd_dataset(grid.n_train, grid.n_test, data_rng)


def _run_cell(args) -> dict:
    grid, overrides, (m, n_delete, seed) = args
    t0 = time.perf_counter()
    try:
        ds = _dataset_for(grid, n_delete, seed)
        cfg = ModelConfig(input_dim=ds.train[0].inputs.shape[1], wire_m=m, **overrides)
        res = train(cfg, ds.train, ds.test, grid.epochs, grid.batch_size, Rng(seed).child("train"),
                    base_lr=grid.base_lr)
    except Exception as exc:
        raise RuntimeError(f"cell task={grid.task.value} m={m} n_delete={n_delete} seed={seed} failed: {exc}") from exc
    return {"task": grid.task.value, "m": m, "n_delete": n_delete, "seed": seed,
            "best_test_rmse": res.best_test_rmse, "epochs": grid.epochs,
            "train_loss_initial": res.train_loss_initial, "train_loss_final": res.log[-1]["train_loss"],
            "wall_seconds": time.perf_counter() - t0}


def run_grid(grid: ExperimentGrid, model_overrides: dict | None = None,
             workers: int | None = None) -> dict:
    """Train every (m, n_delete, seed) cell and aggregate best test RMSEs.

    Each cell's dataset and training stream derive from its seed alone, so
    results do not depend on execution order.  ``workers`` defaults to the
    ``WIRE_NUM_THREADS`` environment variable (1 when unset).
    """
    overrides = dict(model_overrides or {})
    if workers is None:
        workers = int(os.environ.get("WIRE_NUM_THREADS", "1"))
    jobs = [(grid, overrides, c) for c in grid.cells()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]
    rows.sort(key=lambda r: (r["n_delete"], r["m"], r["seed"]))

    aggregates = []
    keys = sorted({(r["n_delete"], r["m"]) for r in rows})
    for nd, m in keys:
        vals = [r["best_test_rmse"] for r in rows if r["n_delete"] == nd and r["m"] == m]
        aggregates.append({"task": grid.task.value, "m": m, "n_delete": nd,
                           "mean": float(np.mean(vals)), "std_err": std_err(vals),
                           "median": float(np.median(vals)), "n_seeds": len(vals)})
    return {"rows": rows, "aggregates": aggregates}


CSV_COLUMNS = ["task", "m", "n_delete", "seed", "best_test_rmse", "epochs", "wall_seconds"]


def rows_to_csv(rows: list[dict], include_timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r["task"], r["m"], r["n_delete"], r["seed"], repr(r["best_test_rmse"]),
                    r["epochs"], f"{r['wall_seconds']:.3f}" if include_timing else ""])
    return buf.getvalue()
