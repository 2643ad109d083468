"""Examples, datasets, embeddings and the text-level preprocessing around them."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

N_CHOICES = 4
SPLITS = ("train", "dev", "test")


class DataFormatError(ValueError):
    """A data or embedding file does not follow the expected format."""


class ValidationError(ValueError):
    """An example violates its invariants; the message names the example id."""


_PUNCT = re.compile(r"[^\w\s']")


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation other than apostrophes, split on whitespace."""
    return _PUNCT.sub(" ", text.lower()).split()


@dataclass(frozen=True)
class Story:
    utterances: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(tuple(u) for u in self.utterances))

    @property
    def words(self) -> list[str]:
        return [w for u in self.utterances for w in u]

    @property
    def eos_mask(self) -> np.ndarray:
        mask = np.zeros(sum(len(u) for u in self.utterances), dtype=bool)
        mask[np.cumsum([len(u) for u in self.utterances]) - 1] = True
        return mask

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class Example:
    id: str
    story: Story
    question: tuple[str, ...]
    choices: tuple[tuple[str, ...], ...]
    answer: int
    split: str = "train"

    def __post_init__(self):
        if not isinstance(self.story, Story):
            object.__setattr__(self, "story", Story(self.story))
        object.__setattr__(self, "question", tuple(self.question))
        object.__setattr__(self, "choices", tuple(tuple(c) for c in self.choices))

    def validate(self) -> "Example":
        if len(self.choices) != N_CHOICES:
            raise ValidationError(f"example {self.id!r}: expected {N_CHOICES} choices, got {len(self.choices)}")
        if not isinstance(self.answer, (int, np.integer)) or isinstance(self.answer, bool) \
                or not 0 <= self.answer < N_CHOICES:
            raise ValidationError(f"example {self.id!r}: answer {self.answer!r} out of range 0..3")
        if not self.question:
            raise ValidationError(f"example {self.id!r}: empty question")
        if not self.story.utterances:
            raise ValidationError(f"example {self.id!r}: empty story")
        if any(len(u) == 0 for u in self.story.utterances):
            raise ValidationError(f"example {self.id!r}: empty utterance")
        if any(len(c) == 0 for c in self.choices):
            raise ValidationError(f"example {self.id!r}: empty choice")
        if self.split not in SPLITS:
            raise ValidationError(f"example {self.id!r}: unknown split {self.split!r}")
        return self

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "split": self.split,
            "story": [list(u) for u in self.story.utterances],
            "question": list(self.question),
            "choices": [list(c) for c in self.choices],
            "answer": int(self.answer),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Example":
        ex_id = rec.get("id", "<missing id>")
        for key in ("id", "split", "story", "question", "choices", "answer"):
            if key not in rec:
                raise ValidationError(f"example {ex_id!r}: missing field {key!r}")
        try:
            story = Story([[w.lower() for w in u] for u in rec["story"]])
            ex = cls(
                id=str(rec["id"]),
                story=story,
                question=[w.lower() for w in rec["question"]],
                choices=[[w.lower() for w in c] for c in rec["choices"]],
                answer=rec["answer"],
                split=rec["split"],
            )
        except (TypeError, AttributeError) as exc:
            raise ValidationError(f"example {ex_id!r}: malformed field ({exc})") from None
        return ex.validate()


@dataclass
class Dataset:
    train: list[Example] = field(default_factory=list)
    dev: list[Example] = field(default_factory=list)
    test: list[Example] = field(default_factory=list)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.dev), len(self.test)

    def split(self, name: str) -> list[Example]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_examples(self) -> list[Example]:
        return [*self.train, *self.dev, *self.test]

    @classmethod
    def from_examples(cls, examples: Iterable[Example]) -> "Dataset":
        ds = cls()
        seen: set[str] = set()
        for ex in examples:
            if ex.id in seen:
                raise ValidationError(f"example {ex.id!r}: duplicate id")
            seen.add(ex.id)
            ds.split(ex.split).append(ex)
        return ds


@dataclass
class EmbeddingTable:
    dimension: int
    entries: dict[str, np.ndarray]

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def load_embedding_table(path) -> EmbeddingTable:
    path = Path(path)
    entries: dict[str, np.ndarray] = {}
    dim = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, vals = parts[0], parts[1:]
            if dim is None:
                if not vals:
                    raise DataFormatError(f"{path}, line {lineno}: entry has no vector components")
                dim = len(vals)
            elif len(vals) != dim:
                raise DataFormatError(f"{path}, line {lineno}: expected {dim} components, got {len(vals)}")
            try:
                entries[word] = np.array([float(v) for v in vals])
            except ValueError:
                raise DataFormatError(f"{path}, line {lineno}: non-numeric component") from None
    if dim is None:
        raise DataFormatError(f"{path}: empty embedding file")
    return EmbeddingTable(dim, entries)


def save_embedding_table(table: EmbeddingTable, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for word, vec in table.entries.items():
            fh.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    examples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}, line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataFormatError(f"{path}, line {lineno}: record is not an object")
            examples.append(Example.from_record(rec))
    return Dataset.from_examples(examples)


def save_dataset(dataset: Dataset, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in dataset.all_examples():
            fh.write(json.dumps(ex.to_record()) + "\n")


def bag_vector(words: Sequence[str], table: EmbeddingTable) -> np.ndarray:
    """Sum of the embeddings of known words; unknown words add nothing."""
    out = np.zeros(table.dimension)
    for w in words:
        vec = table.entries.get(w)
        if vec is not None:
            out += vec
    return out


def cosine(a: np.ndarray, b: np.ndarray, eps: float = 1e-12) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < eps or nb < eps:
        return 0.0
    return float(a @ b / (na * nb))


def prune_story(story: Story, question: Sequence[str], keep_fraction: float,
                table: EmbeddingTable) -> Story:
    """Keep the utterances closest to the question, in their original order."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    n = len(story.utterances)
    n_keep = max(1, math.ceil(keep_fraction * n - 1e-9))
    if n_keep >= n:
        return story
    q = bag_vector(question, table)
    sims = [cosine(bag_vector(u, table), q) for u in story.utterances]
    # stable sort: earlier utterance wins ties
    ranked = sorted(range(n), key=lambda i: -sims[i])
    keep = sorted(ranked[:n_keep])
    return Story([story.utterances[i] for i in keep])


def corrupt_transcript(story: Story, word_error_rate: float, rng_seed: int,
                       lexicon: Sequence[str], *, p_substitute: float = 0.5,
                       p_delete: float = 0.25) -> Story:
    """Emulate recognizer errors by per-word substitution, deletion or duplication.

    Each word is altered with probability ``word_error_rate``. An altered
    word is replaced by a uniform lexicon word, deleted, or repeated; the
    last surviving word of an utterance is never deleted.
    """
    return corrupt_transcript_with_count(story, word_error_rate, rng_seed, lexicon,
                                         p_substitute=p_substitute, p_delete=p_delete)[0]


def corrupt_transcript_with_count(story: Story, word_error_rate: float, rng_seed: int,
                                  lexicon: Sequence[str], *, p_substitute: float = 0.5,
                                  p_delete: float = 0.25) -> tuple[Story, int]:
    """Same as :func:`corrupt_transcript`, also returning how many words were hit."""
    if not 0.0 <= word_error_rate <= 1.0:
        raise ValueError(f"word_error_rate must be in [0, 1], got {word_error_rate}")
    if word_error_rate > 0 and len(lexicon) == 0:
        raise ValueError("corrupt_transcript: empty lexicon with nonzero error rate")
    if word_error_rate == 0:
        return story, 0
    rng = np.random.default_rng(rng_seed)
    utterances = []
    n_altered = 0
    for utt in story.utterances:
        out: list[str] = []
        remaining = len(utt)
        for w in utt:
            remaining -= 1
            if rng.random() >= word_error_rate:
                out.append(w)
                continue
            n_altered += 1
            u = rng.random()
            if u < p_substitute:
                out.append(lexicon[int(rng.integers(len(lexicon)))])
            elif u < p_substitute + p_delete:
                if not out and remaining == 0:
                    out.append(w)
            else:
                out.extend([w, w])
        utterances.append(tuple(out))
    return Story(utterances), n_altered


def corrupt_example(ex: Example, word_error_rate: float, rng_seed: int,
                    lexicon: Sequence[str], **kwargs) -> Example:
    story = corrupt_transcript(ex.story, word_error_rate, rng_seed, lexicon, **kwargs)
    return Example(ex.id, story, ex.question, ex.choices, ex.answer, ex.split)


def vocabulary(examples: Iterable[Example]) -> list[str]:
    """Sorted set of every word in stories, questions and choices."""
    words: set[str] = set()
    for ex in examples:
        words.update(ex.story.words)
        words.update(ex.question)
        for c in ex.choices:
            words.update(c)
    return sorted(words)
