"""Seeded multiple-choice tasks whose answer is recoverable from the story.

``keyword_match``: the question names a key word; exactly one utterance
holds that key immediately followed by the answer word. The three
distractor answers sit in other utterances next to unrelated keys.

``two_fact``: the key links to a bridge word in one utterance and the
bridge links to the answer in another, so no single utterance connects the
question to its answer. Keys, bridges and answers are re-drawn for every
example, so the links cannot be memorized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import N_CHOICES, Dataset, EmbeddingTable, Example, Story, save_dataset, save_embedding_table

KINDS = ("keyword_match", "two_fact")
QUESTION_WORD = "which"


class TaskConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "keyword_match"
    vocab_size: int = 60
    story_utterances: int = 6
    words_per_utterance: int = 4
    n_examples: dict = field(default_factory=lambda: {"train": 500, "dev": 100, "test": 100})
    seed: int = 0
    # how many distractor answers also get their marker facts in the story
    distractor_facts: int = N_CHOICES - 1

    def roles(self) -> tuple[int, int]:
        """(number of marker words per role, number of filler words)."""
        n_roles = 2 if self.kind == "keyword_match" else 3
        n_markers = self.vocab_size // 4
        return n_markers, self.vocab_size - n_roles * n_markers - 1

    def facts_per_story(self) -> int:
        return (1 + self.distractor_facts) * (1 if self.kind == "keyword_match" else 2)

    def validate(self) -> "TaskSpec":
        if self.kind not in KINDS:
            raise TaskConfigError(f"unknown task kind {self.kind!r}")
        if self.vocab_size < 8:
            raise TaskConfigError(f"vocab_size must be >= 8, got {self.vocab_size}")
        n_markers, n_filler = self.roles()
        if n_markers < N_CHOICES:
            raise TaskConfigError(f"vocab_size {self.vocab_size} leaves {n_markers} markers per role; "
                                  f"need at least {N_CHOICES}")
        if n_filler < 1:
            raise TaskConfigError(f"vocab_size {self.vocab_size} leaves no filler words")
        if self.words_per_utterance < 2:
            raise TaskConfigError("words_per_utterance must be >= 2 to hold a marker pair")
        if not 0 <= self.distractor_facts < N_CHOICES:
            raise TaskConfigError(f"distractor_facts must be in 0..{N_CHOICES - 1}")
        facts = self.facts_per_story()
        if self.story_utterances < facts:
            raise TaskConfigError(f"{self.kind} needs at least {facts} utterances, "
                                  f"got {self.story_utterances}")
        if any(n < 0 for n in self.n_examples.values()):
            raise TaskConfigError("negative example count")
        return self


def vocabulary_for(spec: TaskSpec) -> dict[str, list[str]]:
    n_markers, n_filler = spec.roles()
    words = {
        "key": [f"k{i}" for i in range(n_markers)],
        "answer": [f"a{i}" for i in range(n_markers)],
        "filler": [f"f{i}" for i in range(n_filler)],
    }
    if spec.kind == "two_fact":
        words["bridge"] = [f"b{i}" for i in range(n_markers)]
    return words


def _place_facts(rng, spec: TaskSpec, facts: list[tuple[str, str]], fillers: list[str]):
    U, L = spec.story_utterances, spec.words_per_utterance
    utterances = [list(rng.choice(fillers, size=L)) for _ in range(U)]
    slots = rng.permutation(U)[: len(facts)]
    for (first, second), u in zip(facts, slots):
        pos = int(rng.integers(L - 1))
        utterances[u][pos] = first
        utterances[u][pos + 1] = second
    return [[str(w) for w in utt] for utt in utterances]


def _example(rng, spec: TaskSpec, words: dict[str, list[str]], ex_id: str, split: str) -> Example:
    n_markers = len(words["key"])
    keys = rng.choice(n_markers, size=N_CHOICES, replace=False)
    answers = rng.choice(n_markers, size=N_CHOICES, replace=False)
    # slot 0 of keys/answers is the question's chain
    chains = 1 + spec.distractor_facts
    if spec.kind == "keyword_match":
        facts = [(words["key"][k], words["answer"][a]) for k, a in zip(keys[:chains], answers)]
    else:
        bridges = rng.choice(n_markers, size=chains, replace=False)
        facts = [(words["key"][k], words["bridge"][b]) for k, b in zip(keys, bridges)]
        facts += [(words["bridge"][b], words["answer"][a]) for b, a in zip(bridges, answers)]
    story = _place_facts(rng, spec, facts, words["filler"])
    answer = int(rng.integers(N_CHOICES))
    others = [words["answer"][a] for a in answers[1:]]
    rng.shuffle(others)
    choices = others[:answer] + [words["answer"][answers[0]]] + others[answer:]
    question = [QUESTION_WORD, words["key"][keys[0]]]
    return Example(ex_id, Story(story), question, [[c] for c in choices], answer, split)


def generate(spec: TaskSpec) -> Dataset:
    spec.validate()
    words = vocabulary_for(spec)
    rng = np.random.default_rng(spec.seed)
    ds = Dataset()
    for split in ("train", "dev", "test"):
        for i in range(spec.n_examples.get(split, 0)):
            ds.split(split).append(_example(rng, spec, words, f"{spec.kind}-{split}-{i}", split))
    return ds


def synthetic_embeddings(spec: TaskSpec, dimension: int = 50) -> EmbeddingTable:
    """Random unit vectors, one per task word, seeded from the spec."""
    rng = np.random.default_rng([spec.seed, 1])
    all_words = [QUESTION_WORD] + [w for group in vocabulary_for(spec).values() for w in group]
    entries = {}
    for w in all_words:
        v = rng.standard_normal(dimension)
        entries[w] = v / np.linalg.norm(v)
    return EmbeddingTable(dimension, entries)


def write_task(spec: TaskSpec, out_dir, dimension: int = 50) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / f"{spec.kind}.jsonl"
    emb_path = out_dir / f"{spec.kind}.emb.txt"
    save_dataset(generate(spec), data_path)
    save_embedding_table(synthetic_embeddings(spec, dimension), emb_path)
    return data_path, emb_path


def keyword_oracle(example: Example) -> int:
    """Answer a keyword_match example by string matching the key's utterance."""
    key = example.question[-1]
    for utt in example.story.utterances:
        if key in utt:
            i = utt.index(key)
            follower = utt[i + 1] if i + 1 < len(utt) else None
            for c, choice in enumerate(example.choices):
                if follower in choice:
                    return c
    return 0


def two_fact_oracle(example: Example) -> int:
    """Follow key -> bridge in one utterance, then bridge -> answer in another."""
    def follower(word, skip=None):
        for n, utt in enumerate(example.story.utterances):
            if n != skip and word in utt[:-1]:
                return utt[utt.index(word) + 1], n
        return None, None

    bridge, where = follower(example.question[-1])
    target, _ = follower(bridge, skip=where)
    for c, choice in enumerate(example.choices):
        if target in choice:
            return c
    return 0
