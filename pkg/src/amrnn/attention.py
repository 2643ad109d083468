"""Cosine attention over story positions, hopping, and answer selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .autodiff import (DimensionError, Tensor, add, cosine_similarity, normalize_attention,
                       reshape, stack, weighted_sum)
from .encoder import StoryEncoding


class AttentionLevel(str, Enum):
    WORD = "word"
    SENTENCE = "sentence"


@dataclass(frozen=True)
class HopConfig:
    n_hops: int = 1
    level: AttentionLevel = AttentionLevel.WORD

    def __post_init__(self):
        object.__setattr__(self, "level", AttentionLevel(self.level))
        if self.n_hops < 1:
            raise ValueError(f"n_hops must be >= 1, got {self.n_hops}")


@dataclass
class HopRecord:
    raw: np.ndarray
    weights: np.ndarray
    story_vector: np.ndarray
    question_vector: np.ndarray


@dataclass
class AttentionTrace:
    """What each hop looked at: raw cosines, normalized weights, and vectors.

    ``question_vector`` of hop k is the vector that hop produced (V_Q after
    the hop), so ``hops[-1].question_vector`` is what answer selection sees.
    """

    level: AttentionLevel
    hops: list[HopRecord] = field(default_factory=list)

    @property
    def weights(self) -> np.ndarray:
        return np.stack([h.weights for h in self.hops])


def attention_values(story_enc: StoryEncoding, v_q) -> Tensor:
    """Cosine similarity of every ``S_t`` with the question vector."""
    S = story_enc.word_vectors
    q = v_q if isinstance(v_q, Tensor) else Tensor(v_q)
    if q.shape[-1] != S.shape[-1]:
        raise DimensionError(f"attention_values: question dim {q.shape[-1]} != story dim {S.shape[-1]}")
    # broadcast the question over the time axis
    q = reshape(q, (*q.shape[:-1], 1, q.shape[-1]))
    return cosine_similarity(S, q)


def active_positions(story_enc: StoryEncoding, level: AttentionLevel) -> np.ndarray:
    level = AttentionLevel(level)
    if level is AttentionLevel.WORD:
        return story_enc.valid
    return story_enc.eos_mask & story_enc.valid


def story_vector(story_enc: StoryEncoding, alphas, level: AttentionLevel) -> tuple[Tensor, Tensor]:
    """Normalize ``alphas`` over the level's active set and pool ``S_t``.

    Word level uses every position; sentence level only utterance-final
    ones. Returns ``(V_S, weights)``.
    """
    alphas = alphas if isinstance(alphas, Tensor) else Tensor(alphas)
    if alphas.shape != story_enc.valid.shape:
        raise DimensionError(f"story_vector: {alphas.shape[-1]} scores for {len(story_enc)} positions")
    active = active_positions(story_enc, level)
    if not active.any(axis=-1).all():
        raise ValueError("story_vector: no active positions for sentence-level attention")
    weights = normalize_attention(alphas, active)
    return weighted_sum(weights, story_enc.word_vectors), weights


def hop(v_q_k, story_enc: StoryEncoding, level: AttentionLevel) -> tuple[Tensor, HopRecord]:
    alphas = attention_values(story_enc, v_q_k)
    v_s, weights = story_vector(story_enc, alphas, level)
    v_next = add(v_q_k, v_s)
    record = HopRecord(alphas.value.copy(), weights.value.copy(), v_s.value.copy(), v_next.value.copy())
    return v_next, record


def run_hops(v_q_0, story_enc: StoryEncoding, cfg: HopConfig) -> tuple[Tensor, AttentionTrace]:
    if cfg.n_hops < 1:
        raise ValueError(f"n_hops must be >= 1, got {cfg.n_hops}")
    trace = AttentionTrace(AttentionLevel(cfg.level))
    v_q = v_q_0 if isinstance(v_q_0, Tensor) else Tensor(v_q_0)
    for _ in range(cfg.n_hops):
        v_q, record = hop(v_q, story_enc, cfg.level)
        trace.hops.append(record)
    return v_q, trace


def answer_scores(v_q_n, choice_vectors) -> Tensor:
    """Cosine of the final question vector with each choice; ``[..., 4]``."""
    q = v_q_n if isinstance(v_q_n, Tensor) else Tensor(v_q_n)
    if isinstance(choice_vectors, (list, tuple)):
        choice_vectors = stack(choice_vectors, axis=-2)
    q = reshape(q, (*q.shape[:-1], 1, q.shape[-1]))
    return cosine_similarity(q, choice_vectors)


def answer_select(v_q_n, choice_vectors) -> tuple[Tensor, np.ndarray | int]:
    """Scores and the chosen index; ``np.argmax`` already breaks ties toward index 0."""
    scores = answer_scores(v_q_n, choice_vectors)
    chosen = np.argmax(scores.value, axis=-1)
    return scores, (int(chosen) if chosen.ndim == 0 else chosen)
