"""The attention-based multi-hop recurrent network: encode, hop, score."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attention import AttentionLevel, AttentionTrace, HopConfig, HopRecord, answer_scores, run_hops
from .autodiff import (Tape, Tensor, getitem, log_softmax, mean_all, mul, reshape, sub, sum_last)
from .data import N_CHOICES, Example, vocabulary
from .encoder import BiGruEncoder, load_checkpoint, question_vectors, save_checkpoint, story_batch

LOSSES = ("squared", "cross_entropy")


@dataclass
class ForwardResult:
    scores: Tensor
    traces: list[AttentionTrace]


class AMRNN:
    """Encoder shared by question, story and choices, plus the hop settings."""

    def __init__(self, encoder: BiGruEncoder, hops: HopConfig = HopConfig()):
        self.encoder = encoder
        self.hops = hops

    @classmethod
    def for_examples(cls, examples: Sequence[Example], *, hidden_size: int = 128,
                     embedding_dim: int = 128, n_hops: int = 1,
                     level: AttentionLevel | str = AttentionLevel.WORD, seed: int = 0) -> "AMRNN":
        enc = BiGruEncoder(vocabulary(examples), hidden_size, embedding_dim, seed)
        return cls(enc, HopConfig(n_hops, AttentionLevel(level)))

    def parameters(self) -> dict[str, np.ndarray]:
        return self.encoder.parameters()

    def set_parameters(self, params: dict[str, np.ndarray]) -> None:
        self.encoder.set_parameters(params)

    def n_parameters(self) -> int:
        return self.encoder.n_parameters()

    def forward(self, examples: Sequence[Example], enc=None, *, dropout_rate: float = 0.0,
                rng: np.random.Generator | None = None) -> ForwardResult:
        """Answer scores ``[B, 4]`` for a batch; dropout only when a rate and rng are given."""
        enc = enc if enc is not None else self.encoder.view()
        B = len(examples)
        texts = [ex.question for ex in examples] + [c for ex in examples for c in ex.choices]
        vectors = question_vectors(enc, texts)
        two_h = vectors.shape[-1]
        v_q = getitem(vectors, slice(0, B))
        choices = reshape(getitem(vectors, slice(B, None)), (B, N_CHOICES, two_h))
        story = story_batch(enc, [ex.story for ex in examples])
        if dropout_rate > 0.0 and rng is not None:
            keep = 1.0 - dropout_rate
            s_mask = (rng.random(story.word_vectors.shape) < keep) / keep
            q_mask = (rng.random(v_q.shape) < keep) / keep
            story = story.with_vectors(mul(story.word_vectors, s_mask))
            v_q = mul(v_q, q_mask)
        v_n, batch_trace = run_hops(v_q, story, self.hops)
        scores = answer_scores(v_n, choices)
        return ForwardResult(scores, _split_trace(batch_trace, story.valid))

    def decision_function(self, examples: Sequence[Example], batch_size: int = 100) -> np.ndarray:
        out = [self.forward(examples[i: i + batch_size]).scores.value
               for i in range(0, len(examples), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, N_CHOICES))

    def predict(self, examples: Sequence[Example], batch_size: int = 100) -> np.ndarray:
        return np.argmax(self.decision_function(examples, batch_size), axis=-1)

    def trace(self, example: Example) -> AttentionTrace:
        return self.forward([example]).traces[0]

    def save(self, path) -> None:
        save_checkpoint(path, self.encoder, {"n_hops": self.hops.n_hops, "level": self.hops.level.value})

    @classmethod
    def load(cls, path) -> "AMRNN":
        enc, cfg = load_checkpoint(path)
        return cls(enc, HopConfig(int(cfg.get("n_hops", 1)), AttentionLevel(cfg.get("level", "word"))))


def _split_trace(trace: AttentionTrace, valid: np.ndarray) -> list[AttentionTrace]:
    out = []
    for b in range(valid.shape[0]):
        n = int(valid[b].sum())
        hops = [HopRecord(h.raw[b, :n], h.weights[b, :n], h.story_vector[b], h.question_vector[b])
                for h in trace.hops]
        out.append(AttentionTrace(trace.level, hops))
    return out


def targets(examples: Sequence[Example]) -> np.ndarray:
    t = np.zeros((len(examples), N_CHOICES))
    t[np.arange(len(examples)), [ex.answer for ex in examples]] = 1.0
    return t


def loss_from_scores(scores: Tensor, target: np.ndarray, kind: str = "squared") -> Tensor:
    """Per-example loss ``[B]``: squared error to the 0/1 target, or cross-entropy."""
    if kind == "squared":
        diff = sub(scores, target)
        return sum_last(mul(diff, diff))
    if kind == "cross_entropy":
        return mul(sum_last(mul(log_softmax(scores), target)), -1.0)
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")


def batch_loss(model: AMRNN, examples: Sequence[Example], enc=None, *, kind: str = "squared",
               dropout_rate: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
    """Mean per-example loss over the batch (a scalar on the encoder's tape)."""
    result = model.forward(examples, enc, dropout_rate=dropout_rate, rng=rng)
    return mean_all(loss_from_scores(result.scores, targets(examples), kind))


def example_loss(model: AMRNN, example: Example, cfg=None, mode: str = "eval",
                 rng: np.random.Generator | None = None, tape: Tape | None = None) -> Tensor:
    """Loss of one example; ``mode="train"`` applies dropout at ``cfg.dropout_rate``."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    rate = getattr(cfg, "dropout_rate", 0.0) if mode == "train" else 0.0
    kind = getattr(cfg, "loss", "squared")
    if rate > 0 and rng is None:
        rng = np.random.default_rng(getattr(cfg, "seed", 0))
    enc = model.encoder.bind(tape)[0] if tape is not None else None
    return batch_loss(model, [example], enc, kind=kind, dropout_rate=rate, rng=rng)
