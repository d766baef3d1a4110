"""Three-layer perceptron that predicts whether a one-hot level is unsolvable.

Label 1 means unsolvable. The network returns a logit; ``forward`` squashes
it with the logistic function. Training minimises binary cross-entropy with
Adam and decoupled weight decay.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

MODEL_VERSION = 1


class ClassifierError(ValueError):
    pass


class DimMismatch(ClassifierError):
    pass


class SingleClassDataset(ClassifierError):
    pass


class NonFiniteLoss(ClassifierError):
    pass


class VersionMismatch(ClassifierError):
    pass


class CorruptFile(ClassifierError):
    pass


@dataclass
class MlpModel:
    dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout: float = 0.2
    rows: int = 0
    cols: int = 0
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.dims), [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.dropout, self.rows, self.cols, self.seed)

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def digest(self) -> str:
        h = hashlib.sha256()
        for p in self.params():
            h.update(np.ascontiguousarray(p, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    weight_decay: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class LabeledDataset:
    """One-hot levels with labels (1 = unsolvable) and a train/test split."""

    x: np.ndarray
    y: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_items(cls, tensors: Sequence[np.ndarray], labels: Sequence[int],
                   test_fraction: float = 0.2, seed: int = 0, meta: Optional[dict] = None) -> "LabeledDataset":
        x = np.stack([np.asarray(t, dtype=np.float64) for t in tensors])
        y = np.asarray(labels, dtype=np.int64)
        train, test = stratified_split(y, test_fraction, seed)
        return cls(x, y, train, test, dict(meta or {}, test_fraction=test_fraction, split_seed=seed))

    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x[self.train_idx], self.y[self.train_idx]

    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x[self.test_idx], self.y[self.test_idx]


def stratified_split(y: np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        rng.shuffle(idx)
        n_test = int(round(len(idx) * test_fraction))
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def init_model(rows: int, cols: int, hidden1: int = 256, hidden2: int = 128,
               seed: int = 0, dropout: float = 0.2) -> MlpModel:
    if min(rows, cols, hidden1, hidden2) < 1:
        raise DimMismatch("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    dims = [rows * cols * 4, hidden1, hidden2, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, dropout, rows, cols, seed)


def _flatten(model: MlpModel, t: np.ndarray) -> np.ndarray:
    x = np.asarray(t, dtype=np.float64)
    if x.ndim >= 3:
        x = x.reshape(x.shape[0], -1) if x.ndim == 4 else x.reshape(1, -1)
    elif x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != model.input_dim:
        raise DimMismatch(f"input has {x.shape[1]} features, model expects {model.input_dim}")
    return x


def _forward_cache(model: MlpModel, x: np.ndarray, masks=None):
    """Pre-activations and activations per layer; ``masks`` applies dropout."""
    acts = [x]
    pre = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[i]
            acts.append(h)
    return pre, acts


def logits(model: MlpModel, t: np.ndarray) -> np.ndarray:
    """Inference logits for one tensor or a batch (dropout off)."""
    pre, _ = _forward_cache(model, _flatten(model, t))
    return pre[-1][:, 0]


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z)))


def forward(model: MlpModel, t: np.ndarray, training: bool = False,
            rng: Optional[np.random.Generator] = None) -> float:
    """Probability that the level is unsolvable."""
    x = _flatten(model, t)
    masks = _dropout_masks(model, x.shape[0], rng or np.random.default_rng(model.seed)) if training else None
    pre, _ = _forward_cache(model, x, masks)
    p = sigmoid(pre[-1][:, 0])
    return float(p[0]) if p.shape[0] == 1 else p


def predict_proba(model: MlpModel, t: np.ndarray) -> np.ndarray:
    return sigmoid(logits(model, t))


def _dropout_masks(model: MlpModel, n: int, rng: np.random.Generator):
    keep = 1.0 - model.dropout
    if model.dropout <= 0:
        return None
    return [(rng.random((n, d)) < keep) / keep for d in model.dims[1:-1]]


def _backward(model: MlpModel, pre, acts, dlogit: np.ndarray, masks=None):
    """Parameter gradients and the input gradient for upstream ``dlogit``."""
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    g = dlogit.reshape(-1, 1)
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = g.T @ acts[i]
        grads_b[i] = g.sum(axis=0)
        g = g @ model.weights[i]
        if i > 0:
            if masks is not None:
                g = g * masks[i - 1]
            g = g * (pre[i - 1] > 0)
    return grads_w, grads_b, g


def grad_input(model: MlpModel, t: np.ndarray) -> np.ndarray:
    """d logit / d input, shaped like the input tensor (inference mode)."""
    t = np.asarray(t, dtype=np.float64)
    x = _flatten(model, t)
    pre, acts = _forward_cache(model, x)
    _, _, g = _backward(model, pre, acts, np.ones(x.shape[0]))
    return g.reshape(t.shape)


def bce_loss(z: np.ndarray, y: np.ndarray) -> float:
    # log(1 + e^z) - y z, computed stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def evaluate(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    """Accuracy with the rule p >= 0.5 -> unsolvable."""
    if len(y) == 0:
        raise ClassifierError("cannot evaluate on an empty set")
    pred = (predict_proba(model, x) >= 0.5).astype(np.int64)
    return float(np.mean(pred == np.asarray(y)))


@dataclass
class EpochLog:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float


def train(model: MlpModel, data: LabeledDataset, cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, list[EpochLog]]:
    """Mini-batch Adam on binary cross-entropy; returns a trained copy."""
    x_tr, y_tr = data.train()
    if len(y_tr) == 0:
        raise SingleClassDataset("empty training split")
    if len(np.unique(y_tr)) < 2:
        raise SingleClassDataset("training split holds a single class")
    model = model.copy()
    x_tr = _flatten(model, x_tr)
    x_te, y_te = data.test()
    rng = np.random.default_rng(cfg.seed)
    params = model.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(y_tr))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_tr[idx], y_tr[idx].astype(np.float64)
            masks = _dropout_masks(model, len(idx), rng)
            pre, acts = _forward_cache(model, xb, masks)
            z = pre[-1][:, 0]
            loss = bce_loss(z, yb)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}")
            total += loss * len(idx)
            gw, gb, _ = _backward(model, pre, acts, (sigmoid(z) - yb) / len(idx), masks)
            grads = [g for pair in zip(gw, gb) for g in pair]
            step += 1
            lr_t = cfg.learning_rate * np.sqrt(1 - cfg.beta2 ** step) / (1 - cfg.beta1 ** step)
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= cfg.beta1
                mi += (1 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1 - cfg.beta2) * g * g
                p *= 1 - cfg.learning_rate * cfg.weight_decay
                p -= lr_t * mi / (np.sqrt(vi) + cfg.eps)
        if not all(np.all(np.isfinite(p)) for p in params):
            raise NonFiniteLoss(f"non-finite parameters after epoch {epoch}")
        train_acc = evaluate(model, x_tr, y_tr)
        test_acc = evaluate(model, x_te, y_te) if len(y_te) else float("nan")
        history.append(EpochLog(epoch, total / len(y_tr), train_acc, test_acc))
        log.info("epoch %d loss %.4f train %.3f test %.3f", epoch, total / len(y_tr), train_acc, test_acc)
    return model, history


def write_train_log(history: Sequence[EpochLog], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "train_acc", "test_acc"])
        for e in history:
            w.writerow([e.epoch, f"{e.loss:.6f}", f"{e.train_acc:.6f}", f"{e.test_acc:.6f}"])


def save_model(model: MlpModel, path) -> None:
    obj = {
        "version": MODEL_VERSION,
        "dims": model.dims,
        "dropout": model.dropout,
        "rows": model.rows,
        "cols": model.cols,
        "seed": model.seed,
        "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in zip(model.weights, model.biases)],
    }
    Path(path).write_text(json.dumps(obj), encoding="utf-8")


def load_model(path) -> MlpModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if not isinstance(obj, dict) or "version" not in obj:
        raise CorruptFile(f"{path}: missing version")
    if obj["version"] != MODEL_VERSION:
        raise VersionMismatch(f"{path}: version {obj['version']}, expected {MODEL_VERSION}")
    try:
        dims = [int(d) for d in obj["dims"]]
        weights = [np.array(layer["w"], dtype=np.float64) for layer in obj["layers"]]
        biases = [np.array(layer["b"], dtype=np.float64) for layer in obj["layers"]]
        model = MlpModel(dims, weights, biases, float(obj["dropout"]),
                         int(obj.get("rows", 0)), int(obj.get("cols", 0)), int(obj.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
            raise CorruptFile(f"{path}: layer {i} shape {w.shape} disagrees with dims")
    return model
