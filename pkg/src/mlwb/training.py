"""Losses, sgd/adam, the batched training loop with live event emission,
inference, and evaluation metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .compiled import CompiledModel, build_forward
from .errors import ConfigError, ContractError, ShapeError
from .tensor import Tensor

DELTA_TOLERANCE = 1e-12  # |change| below this counts as unchanged


# ---------------------------------------------------------------------------
# Loss functions (tensor level; the autodiff graph has its own versions)
# ---------------------------------------------------------------------------


def loss_mse(y: Tensor, y_hat: Tensor) -> float:
    """Mean of squared differences over all elements."""
    if y.shape != y_hat.shape:
        raise ShapeError(f"mse needs matching shapes, got {list(y.shape)} and {list(y_hat.shape)}")
    diff = y.data.astype(np.float64) - y_hat.data.astype(np.float64)
    return float(np.mean(diff * diff))


def loss_categorical_crossentropy(y_onehot: Tensor, y_probs: Tensor) -> float:
    """Mean over samples of -sum(y * log(clip(p)))."""
    if y_onehot.shape != y_probs.shape:
        raise ShapeError(
            f"crossentropy needs matching shapes, got {list(y_onehot.shape)} "
            f"and {list(y_probs.shape)}"
        )
    p = np.clip(y_probs.data.astype(np.float64), ad.CROSSENTROPY_CLIP, 1.0 - ad.CROSSENTROPY_CLIP)
    y = y_onehot.data.astype(np.float64)
    per_sample = -(y * np.log(p)).reshape(y.shape[0] if y.ndim > 1 else 1, -1).sum(axis=1)
    return float(per_sample.mean())


# ---------------------------------------------------------------------------
# Config / events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    shuffle: bool = True
    seed: int = 0
    validation_split: float = 0.0

    def check(self, n_samples: int) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.batch_size > n_samples:
            raise ConfigError(
                f"batch_size {self.batch_size} exceeds dataset size {n_samples}"
            )
        if not 0.0 <= self.validation_split < 1.0:
            raise ConfigError(
                f"validation_split must be in [0,1), got {self.validation_split}"
            )

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        known = {"epochs", "batch_size", "shuffle", "seed", "validation_split"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return TrainConfig(
            epochs=int(d.get("epochs", 10)),
            batch_size=int(d.get("batch_size", 32)),
            shuffle=bool(d.get("shuffle", True)),
            seed=int(d.get("seed", 0)),
            validation_split=float(d.get("validation_split", 0.0)),
        )


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # [k,k], rows = true, cols = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {"counts": self.counts.astype(int).tolist(), "total": self.total}


def accuracy(cm: ConfusionMatrix) -> float:
    return float(np.trace(cm.counts) / cm.total) if cm.total else 0.0


@dataclass
class MetricsSnapshot:
    loss: float
    accuracy: float | None = None
    batch_duration_ms: float = 0.0
    confusion: ConfusionMatrix | None = None
    weight_deltas: list[dict] = field(default_factory=list)
    val_loss: float | None = None
    val_accuracy: float | None = None

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "accuracy": self.accuracy,
            "batch_duration_ms": self.batch_duration_ms,
            "confusion": self.confusion.to_dict() if self.confusion else None,
            "weight_deltas": self.weight_deltas,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
        }


@dataclass
class TrainEvent:
    kind: str  # batch_end | epoch_end | train_end | aborted
    epoch: int
    batch: int
    metrics: MetricsSnapshot

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epoch": self.epoch,
            "batch": self.batch,
            "metrics": self.metrics.to_dict(),
        }


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


class Optimizer:
    """Keeps slot state across steps; weights in, new weights out."""

    def __init__(self, spec: dict):
        kind = spec.get("kind")
        if kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {kind!r}")
        self.kind = kind
        self.lr = float(spec.get("learning_rate", 0.01))
        if not self.lr > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.lr}")
        if kind == "adam":
            self.beta1 = float(spec.get("beta1", 0.9))
            self.beta2 = float(spec.get("beta2", 0.999))
            self.eps = float(spec.get("epsilon", 1e-8))
            if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.eps > 0):
                raise ConfigError("adam needs beta1, beta2 in (0,1) and epsilon > 0")
            self.t = 0
            self.m: dict[tuple[int, str], np.ndarray] = {}
            self.v: dict[tuple[int, str], np.ndarray] = {}

    def step(
        self,
        weights: tuple[dict[str, Tensor], ...],
        grads: list[dict[str, np.ndarray]],
        mask: list[dict[str, bool]],
    ) -> list[dict[str, Tensor]]:
        if self.kind == "adam":
            self.t += 1
        out = []
        for i, slots in enumerate(weights):
            new_slots = {}
            for name, tensor in slots.items():
                g = grads[i].get(name)
                if g is None or not mask[i][name]:
                    new_slots[name] = tensor
                    continue
                w = tensor.data.astype(np.float64)
                if self.kind == "sgd":
                    w = w - self.lr * g
                else:
                    key = (i, name)
                    m = self.m.get(key, 0.0) * self.beta1 + (1 - self.beta1) * g
                    v = self.v.get(key, 0.0) * self.beta2 + (1 - self.beta2) * g * g
                    self.m[key], self.v[key] = m, v
                    m_hat = m / (1 - self.beta1**self.t)
                    v_hat = v / (1 - self.beta2**self.t)
                    w = w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
                new_slots[name] = Tensor._wrap(
                    np.ascontiguousarray(w.astype(np.float32))
                )
            out.append(new_slots)
        return out


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _check_dataset(compiled: CompiledModel, X: np.ndarray, Y: np.ndarray) -> None:
    if X.ndim < 2 or X.shape[1:] != compiled.input_shape:
        raise ShapeError(
            f"dataset inputs {list(X.shape[1:])} do not match the model input "
            f"{list(compiled.input_shape)}"
        )
    if Y.ndim < 2 or Y.shape[1:] != compiled.output_shape:
        raise ShapeError(
            f"dataset targets {list(Y.shape[1:])} do not match the model output "
            f"{list(compiled.output_shape)}"
        )
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(
            f"dataset has {X.shape[0]} inputs but {Y.shape[0]} targets"
        )


def _weight_deltas(
    before: tuple[dict[str, Tensor], ...], after: list[dict[str, Tensor]]
) -> list[dict]:
    out = []
    for old_slots, new_slots in zip(before, after):
        inc = dec = unch = 0
        for name in old_slots:
            diff = new_slots[name].data.astype(np.float64) - old_slots[name].data.astype(
                np.float64
            )
            inc += int(np.count_nonzero(diff > DELTA_TOLERANCE))
            dec += int(np.count_nonzero(diff < -DELTA_TOLERANCE))
            unch += int(np.count_nonzero(np.abs(diff) <= DELTA_TOLERANCE))
        out.append({"increased": inc, "decreased": dec, "unchanged": unch})
    return out


def _loss_node(loss_name: str, output: ad.Node, yb: np.ndarray) -> ad.Node:
    if loss_name == "mse":
        return ad.mse(output, yb)
    if loss_name == "categorical_crossentropy":
        return ad.categorical_crossentropy(output, yb)
    raise ConfigError(f"unknown loss {loss_name!r}")


def _batch_accuracy(output: np.ndarray, yb: np.ndarray) -> float:
    return float(np.mean(output.argmax(axis=1) == yb.argmax(axis=1)))


def _is_classification(compiled: CompiledModel) -> bool:
    return compiled.spec.loss == "categorical_crossentropy"


def _evaluate(compiled: CompiledModel, X: np.ndarray, Y: np.ndarray) -> tuple[float, float | None]:
    fp = build_forward(compiled, X, training=False)
    out = fp.output.value
    if compiled.spec.loss == "mse":
        loss = float(np.mean((out - Y) ** 2))
    else:
        p = np.clip(out, ad.CROSSENTROPY_CLIP, 1.0 - ad.CROSSENTROPY_CLIP)
        loss = float(-(Y * np.log(p)).sum(axis=tuple(range(1, Y.ndim))).mean())
    acc = _batch_accuracy(out, Y) if _is_classification(compiled) else None
    return loss, acc


def train(
    compiled: CompiledModel,
    dataset,
    config: TrainConfig,
    sink: Callable[[TrainEvent], None] | None = None,
    should_abort: Callable[[], bool] | None = None,
    on_weights: Callable[[CompiledModel], None] | None = None,
) -> CompiledModel:
    """Run the batched loop, emitting batch_end / epoch_end / train_end
    (or aborted) in order. Weight snapshots commit between batches, so a
    concurrent predict always sees a consistent model."""
    X = dataset.X.data
    Y = dataset.Y.data
    _check_dataset(compiled, X, Y)
    n = X.shape[0]
    config.check(n)

    n_val = int(n * config.validation_split)
    n_train = n - n_val
    if n_train < 1:
        raise ConfigError("validation_split leaves no training samples")
    if config.batch_size > n_train:
        raise ConfigError(
            f"batch_size {config.batch_size} exceeds the {n_train} training samples "
            "left after the validation split"
        )
    X_train, Y_train = X[:n_train], Y[:n_train]
    X_val, Y_val = X[n_train:], Y[n_train:]

    rng = np.random.default_rng(config.seed)
    optimizer = Optimizer(compiled.spec.optimizer)
    mask = compiled.trainable_mask()
    classification = _is_classification(compiled)
    emit = sink or (lambda event: None)
    last: MetricsSnapshot | None = None

    for epoch in range(config.epochs):
        order = rng.permutation(n_train) if config.shuffle else np.arange(n_train)
        n_batches = (n_train + config.batch_size - 1) // config.batch_size
        epoch_loss_sum = 0.0
        epoch_acc_sum = 0.0

        for b in range(n_batches):
            if should_abort is not None and should_abort():
                emit(TrainEvent("aborted", epoch, b, last or MetricsSnapshot(loss=0.0)))
                return compiled
            started = time.perf_counter()
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            xb, yb = X_train[idx], Y_train[idx]

            fp = build_forward(compiled, xb, training=True, rng=rng)
            data_loss = _loss_node(compiled.spec.loss, fp.output, yb)
            total = data_loss if fp.reg_penalty is None else ad.add(data_loss, fp.reg_penalty)

            nodes = []
            keys = []
            for i, slots in enumerate(fp.weight_nodes):
                for name, node in slots.items():
                    nodes.append(node)
                    keys.append((i, name))
            grad_map = ad.gradient(total, nodes)
            grads: list[dict[str, np.ndarray]] = [{} for _ in compiled.spec.layers]
            for (i, name), node in zip(keys, nodes):
                grads[i][name] = grad_map[node].data.astype(np.float64)

            before = compiled.weights
            new_weights = optimizer.step(before, grads, mask)

            # fold batch statistics into the batch-norm moving averages
            for i, stats in enumerate(fp.bn_batch_stats):
                if stats is None:
                    continue
                layer = compiled.spec.layers[i]
                momentum = float(layer.params["momentum"])
                slots = dict(new_weights[i])
                for slot_name, stat_name in (
                    ("moving_mean", "mean"),
                    ("moving_variance", "variance"),
                ):
                    old = slots[slot_name].data.astype(np.float64)
                    updated = momentum * old + (1 - momentum) * stats[stat_name]
                    slots[slot_name] = Tensor._wrap(
                        np.ascontiguousarray(updated.astype(np.float32))
                    )
                new_weights[i] = slots

            compiled = compiled.with_weights(new_weights)
            if on_weights is not None:
                on_weights(compiled)

            batch_loss = float(data_loss.value)
            batch_acc = _batch_accuracy(fp.output.value, yb) if classification else None
            epoch_loss_sum += batch_loss * len(idx)
            if classification:
                epoch_acc_sum += batch_acc * len(idx)
            last = MetricsSnapshot(
                loss=batch_loss,
                accuracy=batch_acc,
                batch_duration_ms=(time.perf_counter() - started) * 1000.0,
                weight_deltas=_weight_deltas(before, new_weights),
            )
            emit(TrainEvent("batch_end", epoch, b, last))

        epoch_metrics = MetricsSnapshot(
            loss=epoch_loss_sum / n_train,
            accuracy=(epoch_acc_sum / n_train) if classification else None,
            weight_deltas=last.weight_deltas if last else [],
        )
        if classification:
            eval_X, eval_Y = (X_val, Y_val) if n_val else (X_train, Y_train)
            epoch_metrics.confusion = _confusion_counts(compiled, eval_X, eval_Y)
        if n_val:
            epoch_metrics.val_loss, epoch_metrics.val_accuracy = _evaluate(
                compiled, X_val, Y_val
            )
        last = epoch_metrics
        emit(TrainEvent("epoch_end", epoch, n_batches, epoch_metrics))

    emit(TrainEvent("train_end", config.epochs, 0, last or MetricsSnapshot(loss=0.0)))
    return compiled


# ---------------------------------------------------------------------------
# Inference / evaluation
# ---------------------------------------------------------------------------


def predict(compiled: CompiledModel, x) -> Tensor:
    """Deterministic inference; dropout and noise are pass-through."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    if arr.shape != compiled.input_shape and arr.shape[1:] != compiled.input_shape:
        raise ShapeError(
            f"predict expected input shaped {list(compiled.input_shape)} "
            f"(a batch dimension may be prepended), got {list(arr.shape)}"
        )
    fp = build_forward(compiled, arr, training=False)
    return Tensor._wrap(np.ascontiguousarray(fp.output.value.astype(np.float32)))


def _confusion_counts(compiled: CompiledModel, X: np.ndarray, Y: np.ndarray) -> ConfusionMatrix:
    out = build_forward(compiled, X, training=False).output.value
    k = Y.shape[1]
    counts = np.zeros((k, k), dtype=np.int64)
    true_idx = Y.argmax(axis=1)
    pred_idx = out.argmax(axis=1)
    np.add.at(counts, (true_idx, pred_idx), 1)
    return ConfusionMatrix(counts)


def confusion(compiled: CompiledModel, dataset) -> ConfusionMatrix:
    """Argmax-vs-argmax counts; rows true class, columns predicted."""
    X, Y = dataset.X.data, dataset.Y.data
    _check_dataset(compiled, X, Y)
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise ContractError("confusion matrix needs one-hot targets with >= 2 classes")
    last = compiled.spec.layers[-1]
    softmax_head = (
        last.kind in ("dense", "activation")
        and last.params.get("activation", {}).get("name") == "softmax"
    )
    rows_one_hot = bool(
        np.all((Y == 0) | (Y == 1)) and np.all(Y.sum(axis=1) == 1)
    )
    if not (softmax_head or rows_one_hot):
        raise ContractError(
            "confusion matrix needs a classification model (softmax head or "
            "one-hot targets)"
        )
    return _confusion_counts(compiled, X, Y)
