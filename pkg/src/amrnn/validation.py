"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .data import N_CHOICES, EmbeddingTable, Example, ValidationError


def check_examples(X, *, allow_empty: bool = False) -> list[Example]:
    """Return ``X`` as a list of validated :class:`Example` objects."""
    if isinstance(X, Example):
        raise TypeError("expected a sequence of Example objects, got a single Example")
    try:
        examples = list(X)
    except TypeError:
        raise TypeError(f"expected a sequence of Example objects, got {type(X).__name__}") from None
    for i, ex in enumerate(examples):
        if not isinstance(ex, Example):
            raise TypeError(f"item {i} is {type(ex).__name__}, not Example")
        ex.validate()
    if not examples and not allow_empty:
        raise ValueError("expected at least one example")
    return examples


def check_answers(examples: list[Example], y=None) -> np.ndarray:
    """Answer indices from ``y`` if given, else from the examples themselves."""
    if y is None:
        return np.array([ex.answer for ex in examples], dtype=int)
    y = np.asarray(y)
    if y.shape != (len(examples),):
        raise ValueError(f"y has shape {y.shape}, expected ({len(examples)},)")
    if y.dtype.kind == "f" and np.all(np.mod(y, 1) == 0):
        y = y.astype(int)
    if y.dtype.kind not in "iu":
        raise ValidationError(f"y must hold integer answer indices, got dtype {y.dtype}")
    bad = np.flatnonzero((y < 0) | (y >= N_CHOICES))
    if bad.size:
        raise ValidationError(f"example {examples[bad[0]].id!r}: answer {y[bad[0]]!r} out of range 0..3")
    return y.astype(int)


def with_answers(examples: list[Example], y: np.ndarray) -> list[Example]:
    return [ex if ex.answer == a else Example(ex.id, ex.story, ex.question, ex.choices, int(a), ex.split)
            for ex, a in zip(examples, y)]


def check_table(table, *, required: bool = True) -> EmbeddingTable | None:
    if table is None:
        if required:
            raise ValueError("an embedding table is required")
        return None
    if not isinstance(table, EmbeddingTable):
        raise TypeError(f"expected EmbeddingTable, got {type(table).__name__}")
    return table


def check_positive_int(name: str, value, options: Iterable[int] | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    if options is not None and value not in set(options):
        raise ValueError(f"{name} must be one of {sorted(options)}, got {value}")
    return int(value)
