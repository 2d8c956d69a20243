"""Mini-batch training and evaluation for graph-level regression."""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..rng import Rng, as_rng
from . import autodiff as ad
from .autodiff import NonFiniteError
from .model import ModelConfig, WireTransformer
from .optim import OptState, adam_step

__all__ = ["TrainingDivergedError", "TrainResult", "train", "predict", "evaluate", "normalized_rmse"]

log = logging.getLogger(__name__)


class Example(Protocol):
    inputs: np.ndarray
    coords: np.ndarray
    label: float


class TrainingDivergedError(RuntimeError):
    pass


def normalized_rmse(preds, labels, graph_size) -> float:
    """Root-mean-square error divided by graph size (per example when sizes vary)."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if preds.size == 0:
        raise ValueError("normalized RMSE of an empty set")
    err = (preds - labels) / np.asarray(graph_size, dtype=np.float64)
    return float(np.sqrt(np.mean(err * err)))


@dataclass
class TrainResult:
    log: list[dict]
    best_test_rmse: float
    best_epoch: int
    best_state: dict
    model: WireTransformer
    train_loss_initial: float = math.nan
    extras: dict = field(default_factory=dict)

    def log_jsonl(self) -> str:
        return "".join(json.dumps(rec) + "\n" for rec in self.log)


def _coords_for(ex: Example, m: int) -> np.ndarray:
    c = np.asarray(ex.coords, dtype=np.float64)
    out = np.zeros((c.shape[0], m))
    k = min(m, c.shape[1])
    out[:, :k] = c[:, :k]
    return out


def _groups(examples: Sequence[Example], idx: Sequence[int]) -> list[list[int]]:
    by_n = defaultdict(list)
    for i in idx:
        by_n[examples[i].inputs.shape[0]].append(i)
    return [by_n[n] for n in sorted(by_n)]


def _stack(examples, idx, m):
    x = np.stack([examples[i].inputs for i in idx])
    c = np.stack([_coords_for(examples[i], m) for i in idx]) if m else None
    n = x.shape[1]
    y = np.array([examples[i].label for i in idx], dtype=np.float64) / n
    return x, c, y, n


def predict(model: WireTransformer, examples: Sequence[Example], batch_size: int = 256,
            wire: bool = True) -> np.ndarray:
    """Label-scale predictions (the model regresses label / N internally)."""
    out = np.empty(len(examples))
    m = model.cfg.wire_m
    for start in range(0, len(examples), batch_size):
        idx = list(range(start, min(start + batch_size, len(examples))))
        for grp in _groups(examples, idx):
            x, c, _, n = _stack(examples, grp, m)
            out[grp] = model.forward(x, c, train=False, wire=wire).value[:, 0] * n
    return out


def evaluate(model: WireTransformer, examples: Sequence[Example], wire: bool = True) -> float:
    preds = predict(model, examples, wire=wire)
    labels = np.array([ex.label for ex in examples])
    sizes = np.array([ex.inputs.shape[0] for ex in examples])
    return normalized_rmse(preds, labels, sizes)


def train(model_cfg: ModelConfig, train_set: Sequence[Example], test_set: Sequence[Example],
          epochs: int, batch_size: int, rng: Rng | int | None = None, *,
          base_lr: float = 2e-4, weight_decay: float = 1e-4, alpha: float = 0.01,
          log_stream=None) -> TrainResult:
    """Train with AdamW + cosine decay and report the best normalized test RMSE.

    Randomness: parameters from ``rng.child("init")``, shuffling from
    ``rng.child("shuffle")``, dropout from ``rng.child("dropout")``.  The head
    bias starts at the mean normalized training target.  ``log_stream``, if
    given, receives one JSON line per epoch.
    """
    if not train_set or not test_set:
        raise ValueError("training needs nonempty train and test sets")
    if epochs < 1 or batch_size < 1:
        raise ValueError("epochs and batch size must be positive")
    rng = as_rng(rng)
    model = WireTransformer(model_cfg, rng.child("init"))
    m = model_cfg.wire_m
    targets = np.array([ex.label / ex.inputs.shape[0] for ex in train_set])
    model.params["head.b"].value[:] = targets.mean()

    steps_per_epoch = math.ceil(len(train_set) / batch_size)
    opt = OptState(total_steps=epochs * steps_per_epoch, base_lr=base_lr,
                   weight_decay=weight_decay, alpha=alpha)
    shuffle_rng, drop_rng = rng.child("shuffle"), rng.child("dropout")
    names = list(model.params)

    records: list[dict] = []
    best = (math.inf, -1, None)
    initial_loss = math.nan
    for epoch in range(epochs):
        order = shuffle_rng.child(epoch).permutation(len(train_set))
        loss_sum, count = 0.0, 0
        lr = opt.lr()
        for b in range(steps_per_epoch):
            idx = order[b * batch_size:(b + 1) * batch_size]
            model.zero_grad()
            step_rng = drop_rng.child(opt.step)
            total = None
            try:
                for gi, grp in enumerate(_groups(train_set, idx)):
                    x, c, y, _ = _stack(train_set, grp, m)
                    pred = model.forward(x, c, train=True, rng=step_rng.child(gi))
                    loss = ad.mul(ad.mse(pred, y[:, None]), len(grp) / len(idx))
                    total = loss if total is None else total + loss
                total.backward()
            except NonFiniteError as exc:
                raise TrainingDivergedError(
                    f"non-finite values at epoch {epoch}, step {opt.step}: {exc}") from exc
            lr = adam_step(model.params, {k: model.params[k].grad for k in names}, opt)
            loss_sum += float(total.value) * len(idx)
            count += len(idx)
        train_loss = loss_sum / count
        if epoch == 0:
            initial_loss = train_loss
        test_rmse = evaluate(model, test_set)
        rec = {"epoch": epoch, "train_loss": train_loss, "test_rmse": test_rmse, "lr": lr}
        records.append(rec)
        if log_stream is not None:
            log_stream.write(json.dumps(rec) + "\n")
        log.debug("epoch %d loss %.5f rmse %.5f", epoch, train_loss, test_rmse)
        if test_rmse < best[0]:
            best = (test_rmse, epoch, model.state_dict())
    return TrainResult(records, best[0], best[1], best[2], model, initial_loss)
