"""Optimization and evaluation for :class:`~amrnn.model.AMRNN`."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tape, backward
from .data import Dataset, Example
from .model import AMRNN, LOSSES, batch_loss

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    momentum: float = 0.9
    rms_decay: float = 0.9
    epsilon: float = 1e-8
    dropout_rate: float = 0.2
    batch_size: int = 40
    max_epochs: int = 50
    hop_search: tuple[int, ...] = (1, 2, 3)
    seed: int = 0
    loss: str = "squared"
    # stop once dev accuracy has not improved for this many epochs
    patience: int | None = None

    def __post_init__(self):
        for name in ("learning_rate", "momentum", "rms_decay", "dropout_rate"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {value}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        self.hop_search = tuple(int(n) for n in self.hop_search)


@dataclass
class RmsPropState:
    accumulator: dict[str, np.ndarray] = field(default_factory=dict)
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def rmsprop_update(state: RmsPropState, params: dict[str, np.ndarray],
                   grads: dict[str, np.ndarray], cfg: TrainConfig) -> tuple[dict, RmsPropState]:
    """RMSProp with momentum on the preconditioned step.

    r <- decay * r + (1 - decay) * g**2
    v <- momentum * v - lr * g / sqrt(r + eps)
    theta <- theta + v

    Parameters are updated in place and also returned.
    """
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(theta)
        if g.shape != theta.shape:
            raise ValueError(f"rmsprop_update: gradient for {name} has shape {g.shape}, "
                             f"parameter has {theta.shape}")
        r = state.accumulator.setdefault(name, np.zeros_like(theta))
        v = state.velocity.setdefault(name, np.zeros_like(theta))
        r *= cfg.rms_decay
        r += (1.0 - cfg.rms_decay) * g * g
        v *= cfg.momentum
        v -= cfg.learning_rate * g / np.sqrt(r + cfg.epsilon)
        theta += v
    state.step += 1
    return params, state


def loss_and_grads(model: AMRNN, examples: Sequence[Example], *, kind: str = "squared",
                   dropout_rate: float = 0.0, rng: np.random.Generator | None = None):
    """Mean batch loss and its gradient for every encoder parameter."""
    tape = Tape()
    enc, leaves = model.encoder.bind(tape)
    loss = batch_loss(model, examples, enc, kind=kind, dropout_rate=dropout_rate, rng=rng)
    grads = backward(tape, loss)
    return float(loss.value), {name: grads.get(leaf, np.zeros(leaf.shape)) for name, leaf in leaves.items()}


def evaluate(model, examples: Sequence[Example], cfg: TrainConfig | None = None) -> float:
    """Fraction of examples whose selected choice is the answer."""
    if len(examples) == 0:
        raise ValueError("evaluate: no examples")
    predicted = np.asarray(model.predict(list(examples)))
    answers = np.array([ex.answer for ex in examples])
    return float(np.mean(predicted == answers))


@dataclass
class EpochRecord:
    epoch: int
    mean_train_loss: float
    dev_accuracy: float | None

    def to_record(self) -> dict:
        return {"epoch": self.epoch, "mean_train_loss": self.mean_train_loss,
                "dev_accuracy": self.dev_accuracy}


def train(model: AMRNN, dataset: Dataset, cfg: TrainConfig,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[AMRNN, list[EpochRecord]]:
    """Mini-batch training; the model ends at its best-dev-accuracy snapshot.

    Without a dev split the final parameters are kept.
    """
    if not dataset.train:
        raise ConfigError("train: empty train split")
    rng = np.random.default_rng(cfg.seed)
    state = RmsPropState()
    params = model.parameters()
    history: list[EpochRecord] = []
    best_acc, best_params, stale = -1.0, None, 0
    train_set = list(dataset.train)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start: start + cfg.batch_size]]
            loss, grads = loss_and_grads(model, batch, kind=cfg.loss,
                                         dropout_rate=cfg.dropout_rate, rng=rng)
            rmsprop_update(state, params, grads, cfg)
            total += loss * len(batch)
        dev_acc = evaluate(model, dataset.dev) if dataset.dev else None
        record = EpochRecord(epoch, total / len(train_set), dev_acc)
        history.append(record)
        log.info("epoch %d loss %.6f dev %s", epoch, record.mean_train_loss, dev_acc)
        if on_epoch is not None:
            on_epoch(record)
        if dev_acc is not None:
            if dev_acc > best_acc:
                best_acc, stale = dev_acc, 0
                best_params = {k: v.copy() for k, v in params.items()}
            else:
                stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                break
    if best_params is not None:
        model.set_parameters(best_params)
    return model, history


def write_history(history: Sequence[EpochRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec.to_record()) + "\n")


def read_history(path) -> list[EpochRecord]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(EpochRecord(**json.loads(line)))
    return out


@dataclass
class HopSearch:
    best: int
    dev_accuracy: dict[int, float]
    models: dict[int, AMRNN] = field(repr=False, default_factory=dict)


def tune_hops(model_factory: Callable[[int], AMRNN], dataset: Dataset, cfg: TrainConfig) -> HopSearch:
    """Train one model per hop count; the best dev accuracy wins, fewer hops on ties."""
    if not dataset.dev:
        raise ConfigError("tune_hops: empty dev split")
    accs: dict[int, float] = {}
    models: dict[int, AMRNN] = {}
    for n in sorted(cfg.hop_search):
        model, _ = train(model_factory(n), dataset, cfg)
        accs[n] = evaluate(model, dataset.dev)
        models[n] = model
    best = min(accs, key=lambda n: (-accs[n], n))
    return HopSearch(best, accs, models)
