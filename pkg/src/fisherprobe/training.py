"""Deterministic mini-batch training and evaluation.

The loop is single-threaded and every random draw (split, shuffles,
dropout) is keyed off the config seed, so a rerun reproduces the
checkpoint byte for byte.  Model selection keeps the epoch with the best
validation accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autograd import LOG_EPS, forward, grad_params
from .data import Example, tokenize
from .models import EmbeddingTable, Model, ModelSpec, build_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 5
    seed: int = 0
    valid_fraction: float = 0.1
    patience: int = 0  # 0 disables early stopping

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.valid_fraction < 1.0:
            raise ValueError("valid_fraction must be in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    @classmethod
    def for_synthetic(cls, seed: int = 0, epochs: int = 200) -> "TrainConfig":
        # full-batch SGD is plenty for the 2-d task
        return cls(optimizer="sgd", lr=0.1, batch_size=1_000_000,
                   epochs=epochs, seed=seed)

    @classmethod
    def for_textcnn(cls, seed: int = 0, epochs: int = 5) -> "TrainConfig":
        return cls(optimizer="adam", lr=1e-3, batch_size=32,
                   epochs=epochs, seed=seed)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    valid_loss: float
    valid_acc: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_acc: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "epochs": [vars(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_valid_acc": self.best_valid_acc,
            "seed": self.seed,
        }


def cross_entropy(logprobs: np.ndarray, label: int) -> float:
    """-log p(label), with log-probs floored at log(1e-12)."""
    logprobs = np.asarray(logprobs, dtype=np.float64)
    if not 0 <= label < logprobs.shape[-1]:
        raise IndexError(f"label {label} out of range")
    return float(-max(logprobs[label], LOG_EPS))


def _encode_dataset(spec: ModelSpec, data: list[Example],
                    embeddings: EmbeddingTable | None) -> np.ndarray:
    """Fixed-shape model inputs for the whole dataset.

    Text: (N, max_len) int token-row indices (embedded lazily per batch).
    Points: (N, input_dim) float array.
    """
    if spec.kind == "mlp":
        pts = []
        for ex in data:
            if ex.point is None:
                raise ValueError(f"example {ex.id!r} has no point")
            pts.append(np.asarray(ex.point, dtype=np.float64))
        return np.stack(pts)
    if embeddings is None:
        raise ValueError("text training requires an embedding table")
    ids = np.full((len(data), spec.max_len), embeddings.pad_index, dtype=np.int64)
    for i, ex in enumerate(data):
        if ex.text is None:
            raise ValueError(f"example {ex.id!r} has no text")
        tokens = tokenize(ex.text)[: spec.max_len]
        if not tokens:
            raise ValueError(f"example {ex.id!r} tokenizes to nothing")
        ids[i, : len(tokens)] = [embeddings.token_id(t) for t in tokens]
    return ids


def _batch_input(encoded: np.ndarray, idx: np.ndarray,
                 embeddings: EmbeddingTable | None) -> np.ndarray:
    sel = encoded[idx]
    if sel.dtype == np.int64:
        return embeddings.matrix[sel]
    return sel


def _eval_split(model: Model, encoded, labels, idx, embeddings, chunk=256):
    losses, correct = 0.0, 0
    for start in range(0, len(idx), chunk):
        part = idx[start : start + chunk]
        x = _batch_input(encoded, part, embeddings)
        logp = forward(model.graph, x, model.params)
        pred = np.argmax(logp, axis=-1)
        correct += int(np.sum(pred == labels[part]))
        picked = np.maximum(logp[np.arange(len(part)), labels[part]], LOG_EPS)
        losses += float(-picked.sum())
    return losses / len(idx), correct / len(idx)


def train(spec: ModelSpec, data: list[Example], cfg: TrainConfig,
          embeddings: EmbeddingTable | None = None) -> tuple[Model, TrainReport]:
    """Train a fresh model, returning the best-validation-epoch weights."""
    if not data:
        raise ValueError("training data is empty")
    labels = np.array([ex.label for ex in data], dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise ValueError("training data contains a single class")
    if labels.min() < 0 or labels.max() >= spec.num_classes:
        raise ValueError("label out of range for num_classes")

    model = build_model(spec, cfg.seed, embeddings=embeddings)
    encoded = _encode_dataset(spec, data, embeddings)

    split_rng = np.random.default_rng((cfg.seed, 1))
    order = split_rng.permutation(len(data))
    n_valid = max(1, int(round(len(data) * cfg.valid_fraction)))
    n_valid = min(n_valid, len(data) - 1)
    valid_idx, train_idx = order[:n_valid], order[n_valid:]

    opt_state = _init_optimizer(cfg, model.params)
    report = TrainReport(seed=cfg.seed)
    best_params = {k: v.copy() for k, v in model.params.items()}
    # best validation accuracy; ties go to the lower validation loss
    best_acc, best_loss, best_epoch, since_best = -1.0, np.inf, 0, 0

    for epoch in range(1, cfg.epochs + 1):
        shuffle_rng = np.random.default_rng((cfg.seed, 2, epoch))
        epoch_order = train_idx[shuffle_rng.permutation(len(train_idx))]
        for b, start in enumerate(range(0, len(epoch_order), cfg.batch_size)):
            batch_idx = epoch_order[start : start + cfg.batch_size]
            x = _batch_input(encoded, batch_idx, embeddings)
            dropout_rng = None
            if spec.kind == "textcnn" and spec.dropout > 0.0:
                dropout_rng = np.random.Generator(
                    np.random.Philox(key=cfg.seed, counter=[epoch, b, 0, 0])
                )
            grads = grad_params(model.graph, x, labels[batch_idx], model.params,
                                dropout_rng=dropout_rng)
            _apply_update(cfg, model.params, grads, opt_state)

        train_loss, train_acc = _eval_split(model, encoded, labels, train_idx, embeddings)
        valid_loss, valid_acc = _eval_split(model, encoded, labels, valid_idx, embeddings)
        report.epochs.append(EpochStats(epoch, train_loss, train_acc,
                                        valid_loss, valid_acc))
        log.debug("epoch %d: train %.4f/%.4f valid %.4f/%.4f",
                  epoch, train_loss, train_acc, valid_loss, valid_acc)
        if valid_acc > best_acc or (valid_acc == best_acc and valid_loss < best_loss):
            best_acc, best_loss, best_epoch, since_best = (
                valid_acc, valid_loss, epoch, 0)
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            since_best += 1
            if cfg.patience and since_best >= cfg.patience:
                break

    model.params = best_params
    report.best_epoch = best_epoch
    report.best_valid_acc = best_acc
    return model, report


def evaluate(model: Model, data: list[Example]) -> float:
    """Fraction of argmax-correct predictions."""
    if not data:
        raise ValueError("evaluate needs a nonempty dataset")
    labels = np.array([ex.label for ex in data], dtype=np.int64)
    encoded = _encode_dataset(model.spec, data, model.embeddings)
    _, acc = _eval_split(model, encoded, labels, np.arange(len(data)),
                         model.embeddings)
    return acc


def _init_optimizer(cfg: TrainConfig, params: dict[str, np.ndarray]) -> dict:
    if cfg.optimizer == "sgd":
        return {}
    return {
        "t": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def _apply_update(cfg: TrainConfig, params, grads, state) -> None:
    if cfg.optimizer == "sgd":
        for k in params:
            params[k] = params[k] - cfg.lr * grads[k]
        return
    b1, b2 = cfg.betas
    state["t"] += 1
    t = state["t"]
    for k in params:
        state["m"][k] = b1 * state["m"][k] + (1.0 - b1) * grads[k]
        state["v"][k] = b2 * state["v"][k] + (1.0 - b2) * grads[k] ** 2
        mhat = state["m"][k] / (1.0 - b1**t)
        vhat = state["v"][k] / (1.0 - b2**t)
        params[k] = params[k] - cfg.lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)
