"""Comparison systems: length and similarity heuristics, sliding window, memory network."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import (Tape, Tensor, backward, cosine_similarity, embed, mean_all, mul,
                       normalize_attention, reshape, sum_last, weighted_sum)
from .data import N_CHOICES, Dataset, EmbeddingTable, Example, bag_vector, cosine, vocabulary
from .model import loss_from_scores, targets


class SimpleBaselineKind(str, Enum):
    LONGEST = "longest"
    SHORTEST = "shortest"
    MOST_DIFFERENT_LENGTH = "most_different_length"
    CHOICE_MOST_SIMILAR = "choice_most_similar"
    CHOICE_MOST_DIFFERENT = "choice_most_different"
    QUESTION_CHOICE_SIMILAR = "question_choice_similar"


SIMILARITY_KINDS = {
    SimpleBaselineKind.CHOICE_MOST_SIMILAR,
    SimpleBaselineKind.CHOICE_MOST_DIFFERENT,
    SimpleBaselineKind.QUESTION_CHOICE_SIMILAR,
}


def _first_argmax(scores) -> int:
    return int(np.argmax(np.asarray(scores, dtype=np.float64)))


def simple_baseline(example: Example, kind: SimpleBaselineKind | str,
                    table: EmbeddingTable | None = None) -> int:
    kind = SimpleBaselineKind(kind)
    if kind in SIMILARITY_KINDS and table is None:
        raise ValueError(f"{kind.value} needs an embedding table")
    lengths = np.array([len(c) for c in example.choices], dtype=np.float64)
    if kind is SimpleBaselineKind.LONGEST:
        return _first_argmax(lengths)
    if kind is SimpleBaselineKind.SHORTEST:
        return _first_argmax(-lengths)
    if kind is SimpleBaselineKind.MOST_DIFFERENT_LENGTH:
        gaps = np.abs(lengths[:, None] - lengths[None, :]).sum(axis=1)
        return _first_argmax(gaps)
    bags = [bag_vector(c, table) for c in example.choices]
    if kind is SimpleBaselineKind.QUESTION_CHOICE_SIMILAR:
        q = bag_vector(example.question, table)
        return _first_argmax([cosine(b, q) for b in bags])
    mean_sim = [np.mean([cosine(bags[i], bags[j]) for j in range(N_CHOICES) if j != i])
                for i in range(N_CHOICES)]
    if kind is SimpleBaselineKind.CHOICE_MOST_SIMILAR:
        return _first_argmax(mean_sim)
    return _first_argmax(-np.array(mean_sim))


WINDOW_SEARCH = (1, 2, 3, 5, 10, 15, 20, 30)


def best_window(example: Example, table: EmbeddingTable, W: int) -> int:
    """Start index of the W-utterance window most similar to the question."""
    if W < 1:
        raise ValueError(f"window size must be >= 1, got {W}")
    q = bag_vector(example.question, table)
    sims = np.array([cosine(bag_vector(u, table), q) for u in example.story.utterances])
    w = min(W, len(sims))
    window_scores = [np.mean(sims[i: i + w]) for i in range(len(sims) - w + 1)]
    return _first_argmax(window_scores)


def sliding_window(example: Example, table: EmbeddingTable, W: int) -> int:
    """Pick the window closest to the question, then the choice closest to that window."""
    start = best_window(example, table, W)
    window = example.story.utterances[start: start + min(W, len(example.story.utterances))]
    utt_bags = [bag_vector(u, table) for u in window]
    confidence = [np.mean([cosine(u, bag_vector(c, table)) for u in utt_bags]) for c in example.choices]
    return _first_argmax(confidence)


# -- memory network ---------------------------------------------------------


@dataclass
class MemNetConfig:
    embedding_size: int = 128
    n_hops: int = 1
    learning_rate: float = 0.01
    batch_size: int = 40
    shared_embeddings: bool = True
    max_epochs: int = 50
    hop_search: tuple[int, ...] = (1, 2, 3)
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.embedding_size < 1 or self.batch_size < 1 or self.n_hops < 1:
            raise ValueError("MemNetConfig sizes must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")


@dataclass
class MemNet:
    """Bag-of-words memory network answering by cosine against embedded choices.

    Memories use embedding ``A``, the question and the choices ``B``, and
    memory outputs ``C``. With shared embeddings all three are one matrix.
    """

    vocabulary: list[str]
    config: MemNetConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, vocab: Sequence[str], cfg: MemNetConfig) -> "MemNet":
        vocab = ["<unk>"] + [w for w in vocab if w != "<unk>"]
        rng = np.random.default_rng(cfg.seed)
        names = ("A",) if cfg.shared_embeddings else ("A", "B", "C")
        params = {n: rng.normal(0.0, cfg.init_scale, size=(cfg.embedding_size, len(vocab))) for n in names}
        return cls(vocab, cfg, params)

    @property
    def index(self) -> dict[str, int]:
        idx = getattr(self, "_index", None)
        if idx is None or len(idx) != len(self.vocabulary):
            idx = {w: i for i, w in enumerate(self.vocabulary)}
            self._index = idx
        return idx

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def matrices(self, params=None):
        params = params if params is not None else self.params
        A = params["A"]
        return (A, A, A) if self.config.shared_embeddings else (A, params["B"], params["C"])

    def _bags(self, E, word_lists: Sequence[Sequence[Sequence[str]]]) -> tuple[Tensor, np.ndarray]:
        """Bag embeddings for a ``[B, N]`` grid of word lists -> ``[B, N, d]`` and a validity mask."""
        n_rows = len(word_lists)
        n_cols = max(len(row) for row in word_lists)
        n_words = max((len(ws) for row in word_lists for ws in row), default=1)
        ids = np.zeros((n_rows, n_cols, n_words), dtype=np.intp)
        word_mask = np.zeros((n_rows, n_cols, n_words))
        valid = np.zeros((n_rows, n_cols), dtype=bool)
        idx = self.index
        for r, row in enumerate(word_lists):
            for c, ws in enumerate(row):
                valid[r, c] = True
                for k, w in enumerate(ws):
                    ids[r, c, k] = idx.get(w, 0)
                    word_mask[r, c, k] = 1.0
        return weighted_sum(word_mask, embed(E, ids)), valid

    def forward(self, examples: Sequence[Example], params=None, n_hops: int | None = None):
        """Choice scores ``[B, 4]`` and per-hop memory weights."""
        A, Bm, C = self.matrices(params)
        n_hops = n_hops or self.config.n_hops
        stories = [ex.story.utterances for ex in examples]
        memories, valid = self._bags(A, stories)
        outputs = memories if C is A else self._bags(C, stories)[0]
        u, _ = self._bags(Bm, [[ex.question] for ex in examples])
        u = reshape(u, (len(examples), u.shape[-1]))
        choices, _ = self._bags(Bm, [ex.choices for ex in examples])
        probs = []
        for _ in range(n_hops):
            logits = sum_last(mul(memories, reshape(u, (u.shape[0], 1, u.shape[1]))))
            p = normalize_attention(logits, valid)
            probs.append(p.value)
            u = u + weighted_sum(p, outputs)
        scores = cosine_similarity(reshape(u, (u.shape[0], 1, u.shape[1])), choices)
        return scores, probs

    def decision_function(self, examples: Sequence[Example], batch_size: int = 200) -> np.ndarray:
        return np.concatenate([self.forward(examples[i: i + batch_size])[0].value
                               for i in range(0, len(examples), batch_size)])

    def predict(self, examples: Sequence[Example]) -> np.ndarray:
        return np.argmax(self.decision_function(list(examples)), axis=-1)


def memnet_forward(net: MemNet, example: Example, cfg: MemNetConfig | None = None):
    """Scores and chosen index for one example."""
    scores, _ = net.forward([example], n_hops=(cfg or net.config).n_hops)
    s = scores.value[0]
    return s, _first_argmax(s)


def _sgd_fit(net: MemNet, train: Sequence[Example], cfg: MemNetConfig, n_hops: int) -> MemNet:
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.max_epochs):
        order = rng.permutation(len(train))
        for start in range(0, len(order), cfg.batch_size):
            batch = [train[i] for i in order[start: start + cfg.batch_size]]
            tape = Tape()
            leaves = {k: tape.leaf(v, k) for k, v in net.params.items()}
            scores, _ = net.forward(batch, leaves, n_hops)
            loss = mean_all(loss_from_scores(scores, targets(batch)))
            grads = backward(tape, loss)
            for k, leaf in leaves.items():
                g = grads.get(leaf)
                if g is not None:
                    net.params[k] -= cfg.learning_rate * g
    return net


def memnet_train(net: MemNet, dataset: Dataset, cfg: MemNetConfig | None = None) -> MemNet:
    """Plain SGD on the squared-error loss; the hop count is picked on dev when there is one."""
    cfg = cfg or net.config
    if not dataset.train:
        raise ValueError("memnet_train: empty train split")
    if cfg.max_epochs == 0:
        return net
    hop_options = sorted(cfg.hop_search) if dataset.dev else [cfg.n_hops]
    start = {k: v.copy() for k, v in net.params.items()}
    best = None
    for n in hop_options:
        candidate = MemNet(net.vocabulary, cfg, {k: v.copy() for k, v in start.items()})
        candidate.config = MemNetConfig(**{**cfg.__dict__, "n_hops": n})
        _sgd_fit(candidate, dataset.train, cfg, n)
        acc = float(np.mean(candidate.predict(dataset.dev) == [ex.answer for ex in dataset.dev])) \
            if dataset.dev else 0.0
        if best is None or acc > best[0]:
            best = (acc, candidate)
    net.params, net.config = best[1].params, best[1].config
    return net


def memnet_for(examples: Sequence[Example], cfg: MemNetConfig) -> MemNet:
    return MemNet.init(vocabulary(examples), cfg)


# -- reports ----------------------------------------------------------------


def write_report(path, method: str, examples: Sequence[Example], chosen: Sequence[int],
                 mode: str = "w") -> float:
    """Per-example records followed by one aggregate accuracy line; returns the accuracy."""
    correct = [int(c) == ex.answer for ex, c in zip(examples, chosen)]
    accuracy = float(np.mean(correct)) if correct else 0.0
    with Path(path).open(mode, encoding="utf-8") as fh:
        for ex, c, ok in zip(examples, chosen, correct):
            fh.write(json.dumps({"id": ex.id, "method": method, "chosen": int(c), "correct": ok}) + "\n")
        fh.write(json.dumps({"method": method, "accuracy": accuracy, "n": len(correct)}) + "\n")
    return accuracy
