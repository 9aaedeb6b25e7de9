"""Seeded training loop and evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from harlab.errors import DataError, TrainingError
from harlab.nncore.adadelta import AdadeltaState, TrainConfig, adadelta_step
from harlab.nncore.model import CnnModel, check_onehot, forward, loss_and_grad

EVAL_CHUNK = 512


@dataclass
class TrainingCurve:
    """Per-epoch record: mean training loss, validation accuracy, and the
    CPU seconds spent in the training loop that epoch (timing excludes
    data preparation, in keeping with the portable-timing convention)."""

    loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    @property
    def total_seconds(self) -> float:
        return float(sum(self.epoch_seconds))

    def plateau_epoch(self, patience: int = 3, threshold: float = 0.002) -> int:
        """First epoch (1-indexed) after which validation accuracy stops
        improving by >= ``threshold`` within ``patience`` epochs."""
        acc = self.val_accuracy
        best = -np.inf
        for e in range(len(acc)):
            best = max(best, acc[e])
            window = acc[e + 1 : e + 1 + patience]
            if all(a < best + threshold for a in window):
                return e + 1
        return len(acc)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # (C, C), rows = true class, columns = predicted


def predict_probs(model: CnnModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    chunks = [
        forward(model, x[i : i + EVAL_CHUNK], mode="eval").probs
        for i in range(0, len(x), EVAL_CHUNK)
    ]
    return np.concatenate(chunks, axis=0)


def evaluate(model: CnnModel, dataset) -> EvalResult:
    """Accuracy and confusion matrix on (features, one-hot labels)."""
    x, y = dataset
    y = check_onehot(y, model.num_classes)
    if len(x) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    probs = predict_probs(model, x)
    pred = probs.argmax(axis=1)
    true = y.argmax(axis=1)
    c = model.num_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    return EvalResult(accuracy=float(np.mean(pred == true)), confusion=confusion)


def train(model: CnnModel, train_set, val_set, cfg: TrainConfig):
    """Train ``model`` in place; returns (model, TrainingCurve).

    Deterministic for a given cfg.seed: batch order and dropout masks are
    drawn from one generator seeded there. The curve has exactly
    cfg.epochs entries. The model is exclusively owned by this call until
    it returns.
    """
    x_train, y_train = train_set
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = check_onehot(y_train, model.num_classes)
    if len(x_train) == 0:
        raise DataError("training split is empty")
    x_val, y_val = val_set
    if len(x_val) == 0:
        raise DataError("validation split is empty")

    rng = np.random.default_rng(cfg.seed)
    state = AdadeltaState.for_model(model)
    curve = TrainingCurve()
    n = len(x_train)
    for epoch in range(cfg.epochs):
        t0 = time.process_time()
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            sel = perm[start : start + cfg.batch_size]
            loss, grads = loss_and_grad(model, x_train[sel], y_train[sel], rng=rng)
            try:
                adadelta_step(model.params, grads, state, cfg)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch + 1}: {exc}") from None
            epoch_loss += loss * len(sel)
        curve.loss.append(epoch_loss / n)
        curve.epoch_seconds.append(time.process_time() - t0)
        curve.val_accuracy.append(evaluate(model, (x_val, y_val)).accuracy)
    return model, curve
