"""Shared bidirectional GRU encoder for questions, choices and stories."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import (DimensionError, Tape, Tensor, add, affine, concat, embed,
                       getitem, mul, sigmoid, stack, sub, tanh)
from .data import Story

UNK = "<unk>"


@dataclass
class GruParams:
    """One direction's gate weights. Fields hold arrays or tape Tensors."""

    W_z: object
    W_r: object
    W_h: object
    U_z: object
    U_r: object
    U_h: object
    b_z: object
    b_r: object
    b_h: object

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "GruParams":
        def glorot(rows, cols):
            bound = np.sqrt(6.0 / (rows + cols))
            return rng.uniform(-bound, bound, size=(rows, cols))

        h, d = hidden_size, input_size
        return cls(
            W_z=glorot(h, d), W_r=glorot(h, d), W_h=glorot(h, d),
            U_z=glorot(h, h), U_r=glorot(h, h), U_h=glorot(h, h),
            b_z=np.zeros(h), b_r=np.zeros(h), b_h=np.zeros(h),
        )

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "GruParams":
        h, d = hidden_size, input_size
        return cls(*(np.zeros((h, d)) for _ in range(3)),
                   *(np.zeros((h, h)) for _ in range(3)),
                   *(np.zeros(h) for _ in range(3)))

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    @property
    def hidden_size(self) -> int:
        return _shape(self.U_z)[0]

    @property
    def input_size(self) -> int:
        return _shape(self.W_z)[1]

    def check(self) -> None:
        h, d = self.hidden_size, self.input_size
        for name, value in self.items():
            expected = {"W": (h, d), "U": (h, h), "b": (h,)}[name[0]]
            if _shape(value) != expected:
                raise DimensionError(f"GruParams.{name}: shape {_shape(value)}, expected {expected}")


def _shape(x) -> tuple[int, ...]:
    return x.shape if isinstance(x, Tensor) else np.shape(x)


def gru_step(params: GruParams, x, h_prev) -> Tensor:
    """One GRU update; ``x`` is ``[..., d]`` and ``h_prev`` is ``[..., h]``.

    z = sigmoid(W_z x + U_z h + b_z), r = sigmoid(W_r x + U_r h + b_r),
    cand = tanh(W_h x + U_h (r * h) + b_h), output (1 - z) * h + z * cand.
    """
    return _gru_update(params, affine(params.W_z, x, params.b_z), affine(params.W_r, x, params.b_r),
                       affine(params.W_h, x, params.b_h), h_prev)


def _gru_update(p: GruParams, xz, xr, xh, h) -> Tensor:
    z = sigmoid(add(xz, affine(p.U_z, h)))
    r = sigmoid(add(xr, affine(p.U_r, h)))
    cand = tanh(add(xh, affine(p.U_h, mul(r, h))))
    return add(mul(sub(1.0, z), h), mul(z, cand))


def gru_scan(params: GruParams, inputs, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Run ``gru_step`` left to right over ``inputs[..., T, d]`` from a zero state.

    Where ``mask[..., t]`` is False the state is carried over unchanged, so
    the final state is the state after each row's last valid step. Returns
    the per-step states ``[..., T, h]`` and the final state ``[..., h]``.
    """
    T = _shape(inputs)[-2]
    lead = _shape(inputs)[:-2]
    h = Tensor(np.zeros((*lead, params.hidden_size)))
    # input projections for all steps at once
    xz = affine(params.W_z, inputs, params.b_z)
    xr = affine(params.W_r, inputs, params.b_r)
    xh = affine(params.W_h, inputs, params.b_h)
    states = []
    for t in range(T):
        idx = (Ellipsis, t, slice(None))
        new = _gru_update(params, getitem(xz, idx), getitem(xr, idx), getitem(xh, idx), h)
        if mask is not None and not mask[..., t].all():
            m = mask[..., t, None].astype(np.float64)
            new = add(mul(new, m), mul(h, 1.0 - m))
        h = new
        states.append(h)
    return stack(states, axis=-2), h


class BiGruEncoder:
    """Embedding plus forward/backward GRUs; one instance encodes everything.

    The embedding is a ``d x V`` matrix applied to 1-of-N word codes,
    i.e. a column lookup. Index 0 is reserved for unknown words.
    """

    def __init__(self, vocabulary: Sequence[str], hidden_size: int = 128, embedding_dim: int = 128,
                 seed: int = 0):
        vocab = [UNK] + [w for w in vocabulary if w != UNK]
        self.vocabulary = vocab
        self.index = {w: i for i, w in enumerate(vocab)}
        self.hidden_size = hidden_size
        self.embedding_dim = embedding_dim
        rng = np.random.default_rng(seed)
        bound = np.sqrt(6.0 / (embedding_dim + len(vocab)))
        self.embedding = rng.uniform(-bound, bound, size=(embedding_dim, len(vocab)))
        self.forward = GruParams.init(embedding_dim, hidden_size, rng)
        self.backward = GruParams.init(embedding_dim, hidden_size, rng)

    def ids(self, words: Sequence[str]) -> np.ndarray:
        return np.array([self.index.get(w, 0) for w in words], dtype=np.intp)

    def parameters(self) -> dict[str, np.ndarray]:
        out = {"embedding": self.embedding}
        for prefix, gru in (("forward", self.forward), ("backward", self.backward)):
            for name, value in gru.items():
                out[f"{prefix}.{name}"] = value
        return out

    def set_parameters(self, params: dict[str, np.ndarray]) -> None:
        self.embedding = np.array(params["embedding"], dtype=np.float64)
        for prefix in ("forward", "backward"):
            gru = getattr(self, prefix)
            for name, _ in gru.items():
                setattr(gru, name, np.array(params[f"{prefix}.{name}"], dtype=np.float64))
            gru.check()

    def bind(self, tape: Tape) -> tuple["BoundEncoder", dict[str, Tensor]]:
        """Put every parameter on ``tape`` as a leaf; returns the view and the leaves."""
        leaves = {name: tape.leaf(value, name) for name, value in self.parameters().items()}
        return self.view(leaves), leaves

    def view(self, params: dict[str, object] | None = None) -> "BoundEncoder":
        params = params or self.parameters()
        fwd = GruParams(**{n: params[f"forward.{n}"] for n, _ in self.forward.items()})
        bwd = GruParams(**{n: params[f"backward.{n}"] for n, _ in self.backward.items()})
        return BoundEncoder(self, params["embedding"], fwd, bwd)

    def n_parameters(self) -> int:
        return sum(int(np.size(v)) for v in self.parameters().values())


@dataclass
class BoundEncoder:
    """Encoder parameters as seen by one forward pass."""

    owner: BiGruEncoder
    embedding: object
    forward: GruParams
    backward: GruParams

    @property
    def hidden_size(self) -> int:
        return self.owner.hidden_size

    def ids(self, words: Sequence[str]) -> np.ndarray:
        return self.owner.ids(words)


def _as_view(enc) -> BoundEncoder:
    return enc.view() if isinstance(enc, BiGruEncoder) else enc


@dataclass
class StoryEncoding:
    """Per-position story vectors ``S_t = [y_f(t) | y_b(t)]``.

    ``word_vectors`` is ``[T, 2h]`` for one story or ``[B, T, 2h]`` for a
    padded batch; ``valid`` marks real (non-padding) positions and
    ``eos_mask`` marks utterance-final ones.
    """

    word_vectors: Tensor
    eos_mask: np.ndarray
    valid: np.ndarray

    def __len__(self) -> int:
        return self.word_vectors.shape[-2]

    def with_vectors(self, vectors: Tensor) -> "StoryEncoding":
        return replace(self, word_vectors=vectors)


def encode_bidirectional(enc, words: Sequence[str]) -> tuple[Tensor, Tensor]:
    """Forward and backward GRU states, each ``[T, h]``, for one word sequence."""
    if len(words) == 0:
        raise ValueError("encode_bidirectional: empty word sequence")
    yf, yb, _, _ = encode_batch(enc, [enc.ids(words)])
    return getitem(yf, 0), getitem(yb, 0)


def encode_batch(enc, sequences: Sequence[np.ndarray]):
    """Bidirectional encoding of a padded batch of id sequences.

    Returns ``(y_f, y_b, final_f, final_b)`` where ``y_*`` are ``[B, T, h]``
    aligned to the original word positions, ``final_f`` is ``y_f`` at the
    last word and ``final_b`` is ``y_b`` at the first word.
    """
    enc = _as_view(enc)
    lengths = np.array([len(s) for s in sequences])
    if lengths.size == 0 or lengths.min() < 1:
        raise ValueError("encode_batch: every sequence must be non-empty")
    B, T = len(sequences), int(lengths.max())
    ids = np.zeros((B, T), dtype=np.intp)
    rev = np.zeros((B, T), dtype=np.intp)
    mask = np.arange(T)[None, :] < lengths[:, None]
    for b, s in enumerate(sequences):
        ids[b, : len(s)] = s
        rev[b, : len(s)] = s[::-1]
    fwd_states, final_f = gru_scan(enc.forward, embed(enc.embedding, ids), mask)
    rev_states, final_b = gru_scan(enc.backward, embed(enc.embedding, rev), mask)
    # y_b at position t is the reversed run's state after L - t steps
    t_idx = np.where(mask, lengths[:, None] - 1 - np.arange(T)[None, :], np.arange(T)[None, :])
    b_idx = np.broadcast_to(np.arange(B)[:, None], (B, T))
    bwd_states = getitem(rev_states, (b_idx, t_idx))
    return fwd_states, bwd_states, final_f, final_b


def question_vector(enc, words: Sequence[str]) -> Tensor:
    """``[y_f(T) | y_b(1)]``; also used for every answer choice."""
    if len(words) == 0:
        raise ValueError("question_vector: empty word sequence")
    return getitem(question_vectors(enc, [words]), 0)


def question_vectors(enc, word_lists: Sequence[Sequence[str]]) -> Tensor:
    enc = _as_view(enc)
    _, _, final_f, final_b = encode_batch(enc, [enc.ids(w) for w in word_lists])
    return concat(final_f, final_b)


def story_word_vectors(enc, story: Story) -> StoryEncoding:
    """Encode the whole story as one flat sequence; utterance ends become eos positions."""
    if not story.utterances:
        raise ValueError("story_word_vectors: empty story")
    batch = story_batch(enc, [story])
    return StoryEncoding(getitem(batch.word_vectors, 0), batch.eos_mask[0], batch.valid[0])


def story_batch(enc, stories: Sequence[Story]) -> StoryEncoding:
    enc = _as_view(enc)
    yf, yb, _, _ = encode_batch(enc, [enc.ids(s.words) for s in stories])
    B, T = yf.shape[0], yf.shape[1]
    eos = np.zeros((B, T), dtype=bool)
    valid = np.zeros((B, T), dtype=bool)
    for b, s in enumerate(stories):
        m = s.eos_mask
        eos[b, : m.size] = m
        valid[b, : m.size] = True
    return StoryEncoding(concat(yf, yb), eos, valid)


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(path, enc: BiGruEncoder, extra: dict | None = None) -> None:
    """JSON container; floats are written with ``repr`` so reading back is bit-exact."""
    doc = {
        "format": "amrnn-checkpoint/1",
        "hidden_size": enc.hidden_size,
        "embedding_dim": enc.embedding_dim,
        "vocabulary": enc.vocabulary,
        "config": extra or {},
        "parameters": {
            name: {"shape": list(value.shape), "values": value.reshape(-1).tolist()}
            for name, value in sorted(enc.parameters().items())
        },
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> tuple[BiGruEncoder, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not a checkpoint file ({exc.msg})") from None
    if doc.get("format") != "amrnn-checkpoint/1":
        raise ValueError(f"{path}: unrecognized checkpoint format {doc.get('format')!r}")
    enc = BiGruEncoder.__new__(BiGruEncoder)
    enc.vocabulary = list(doc["vocabulary"])
    enc.index = {w: i for i, w in enumerate(enc.vocabulary)}
    enc.hidden_size = int(doc["hidden_size"])
    enc.embedding_dim = int(doc["embedding_dim"])
    params = {
        name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["parameters"].items()
    }
    enc.forward = GruParams.zeros(enc.embedding_dim, enc.hidden_size)
    enc.backward = GruParams.zeros(enc.embedding_dim, enc.hidden_size)
    enc.set_parameters(params)
    return enc, doc["config"]
