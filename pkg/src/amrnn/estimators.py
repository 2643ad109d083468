"""scikit-learn style wrappers.

Inputs ``X`` are sequences of :class:`~amrnn.data.Example`; ``y`` defaults
to each example's own ``answer``. Predictions are choice indices 0..3.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import baselines
from .data import Dataset, Example, corrupt_example, prune_story, vocabulary
from .model import AMRNN
from .training import TrainConfig, train
from .validation import check_answers, check_examples, check_positive_int, check_table, with_answers

CLASSES = np.arange(4)


class _ChoiceClassifier(ClassifierMixin, BaseEstimator):
    def score(self, X, y=None, sample_weight=None):
        examples = check_examples(X)
        y = check_answers(examples, y)
        return float(np.average(self.predict(examples) == y, weights=sample_weight))


class AMRNNClassifier(_ChoiceClassifier):
    """Attention-based multi-hop GRU reader.

    ``fit`` trains with RMSProp; when ``X_dev`` is given the parameters with
    the best dev accuracy are kept.
    """

    def __init__(self, hidden_size=128, embedding_dim=128, n_hops=1, level="word",
                 learning_rate=1e-5, momentum=0.9, rms_decay=0.9, epsilon=1e-8,
                 dropout_rate=0.2, batch_size=40, max_epochs=50, loss="squared",
                 patience=None, random_state=0):
        self.hidden_size = hidden_size
        self.embedding_dim = embedding_dim
        self.n_hops = n_hops
        self.level = level
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.rms_decay = rms_decay
        self.epsilon = epsilon
        self.dropout_rate = dropout_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.loss = loss
        self.patience = patience
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, momentum=self.momentum, rms_decay=self.rms_decay,
            epsilon=self.epsilon, dropout_rate=self.dropout_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, seed=self.random_state, loss=self.loss, patience=self.patience,
        )

    def fit(self, X, y=None, X_dev=None):
        examples = check_examples(X)
        examples = with_answers(examples, check_answers(examples, y))
        dev = check_examples(X_dev) if X_dev is not None else []
        check_positive_int("n_hops", self.n_hops)
        self.model_ = AMRNN.for_examples(
            examples, hidden_size=self.hidden_size, embedding_dim=self.embedding_dim,
            n_hops=self.n_hops, level=self.level, seed=self.random_state)
        _, self.history_ = train(self.model_, Dataset(train=examples, dev=dev), self.train_config())
        self.classes_ = CLASSES
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(check_examples(X))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


class MemNetClassifier(_ChoiceClassifier):
    """Bag-of-words memory network baseline trained with plain SGD."""

    def __init__(self, embedding_size=128, n_hops=1, learning_rate=0.01, batch_size=40,
                 shared_embeddings=True, max_epochs=50, hop_search=(1, 2, 3), random_state=0):
        self.embedding_size = embedding_size
        self.n_hops = n_hops
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.shared_embeddings = shared_embeddings
        self.max_epochs = max_epochs
        self.hop_search = hop_search
        self.random_state = random_state

    def fit(self, X, y=None, X_dev=None):
        examples = check_examples(X)
        examples = with_answers(examples, check_answers(examples, y))
        dev = check_examples(X_dev) if X_dev is not None else []
        cfg = baselines.MemNetConfig(
            embedding_size=self.embedding_size, n_hops=self.n_hops, learning_rate=self.learning_rate,
            batch_size=self.batch_size, shared_embeddings=self.shared_embeddings,
            max_epochs=self.max_epochs, hop_search=tuple(self.hop_search), seed=self.random_state)
        self.net_ = baselines.memnet_for(examples, cfg)
        baselines.memnet_train(self.net_, Dataset(train=examples, dev=dev), cfg)
        self.classes_ = CLASSES
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        return self.net_.decision_function(check_examples(X))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


class SimpleBaselineClassifier(_ChoiceClassifier):
    """Length or bag-of-embedding similarity heuristics; nothing is learned."""

    def __init__(self, kind="longest", embeddings=None):
        self.kind = kind
        self.embeddings = embeddings

    def fit(self, X=None, y=None):
        self.kind_ = baselines.SimpleBaselineKind(self.kind)
        check_table(self.embeddings, required=self.kind_ in baselines.SIMILARITY_KINDS)
        self.classes_ = CLASSES
        return self

    def predict(self, X):
        check_is_fitted(self, "kind_")
        return np.array([baselines.simple_baseline(ex, self.kind_, self.embeddings)
                         for ex in check_examples(X)])


class SlidingWindowClassifier(_ChoiceClassifier):
    """Window of utterances most similar to the question; ``fit`` picks the width."""

    def __init__(self, embeddings=None, window_size=None, search_set=baselines.WINDOW_SEARCH):
        self.embeddings = embeddings
        self.window_size = window_size
        self.search_set = search_set

    def fit(self, X, y=None):
        check_table(self.embeddings)
        if self.window_size is not None:
            self.window_size_ = check_positive_int("window_size", self.window_size)
        else:
            examples = check_examples(X)
            y = check_answers(examples, y)
            accs = {}
            for w in self.search_set:
                w = check_positive_int("window size", w)
                chosen = np.array([baselines.sliding_window(ex, self.embeddings, w) for ex in examples])
                accs[w] = float(np.mean(chosen == y))
            self.search_accuracy_ = accs
            self.window_size_ = min(accs, key=lambda w: (-accs[w], w))
        self.classes_ = CLASSES
        return self

    def predict(self, X):
        check_is_fitted(self, "window_size_")
        return np.array([baselines.sliding_window(ex, self.embeddings, self.window_size_)
                         for ex in check_examples(X)])


class UtterancePruner(TransformerMixin, BaseEstimator):
    """Drop the story utterances least similar to the question."""

    def __init__(self, embeddings=None, keep_fraction=1.0):
        self.embeddings = embeddings
        self.keep_fraction = keep_fraction

    def fit(self, X=None, y=None):
        check_table(self.embeddings)
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        self.fitted_ = True
        return self

    def transform(self, X):
        check_is_fitted(self, "fitted_")
        return [Example(ex.id, prune_story(ex.story, ex.question, self.keep_fraction, self.embeddings),
                        ex.question, ex.choices, ex.answer, ex.split)
                for ex in check_examples(X, allow_empty=True)]


class TranscriptCorruptor(TransformerMixin, BaseEstimator):
    """Seeded word substitution/deletion/duplication on story transcripts.

    The lexicon defaults to the vocabulary seen in ``fit``. Example ``i`` of
    a ``transform`` call uses the seed ``(random_state, i)``.
    """

    def __init__(self, word_error_rate=0.0, lexicon=None, random_state=0):
        self.word_error_rate = word_error_rate
        self.lexicon = lexicon
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if self.lexicon is not None:
            self.lexicon_ = list(self.lexicon)
        else:
            self.lexicon_ = vocabulary(check_examples(X)) if X is not None else []
        return self

    def transform(self, X):
        check_is_fitted(self, "lexicon_")
        return [corrupt_example(ex, self.word_error_rate, [self.random_state, i], self.lexicon_)
                for i, ex in enumerate(check_examples(X, allow_empty=True))]
