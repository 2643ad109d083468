import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from amrnn.data import Example, Story, ValidationError
from amrnn.estimators import (AMRNNClassifier, MemNetClassifier, SimpleBaselineClassifier,
                              SlidingWindowClassifier, TranscriptCorruptor, UtterancePruner)
from amrnn.synthetic import TaskSpec, generate, synthetic_embeddings

SPEC = TaskSpec(vocab_size=16, story_utterances=4, words_per_utterance=3,
                n_examples={"train": 40, "dev": 10, "test": 10}, seed=1)


@pytest.fixture(scope="module")
def ds():
    return generate(SPEC)


@pytest.fixture(scope="module")
def table():
    return synthetic_embeddings(SPEC, 8)


def test_get_params_and_clone():
    est = AMRNNClassifier(hidden_size=8, n_hops=2, level="sentence")
    params = est.get_params()
    assert params["hidden_size"] == 8 and params["level"] == "sentence"
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(max_epochs=3)
    assert est.max_epochs == 3


def test_amrnn_classifier_fit_predict(ds):
    est = AMRNNClassifier(hidden_size=4, embedding_dim=4, max_epochs=2, learning_rate=0.01, batch_size=10)
    assert est.fit(ds.train, X_dev=ds.dev) is est
    pred = est.predict(ds.test)
    assert pred.shape == (10,) and set(pred) <= {0, 1, 2, 3}
    assert est.decision_function(ds.test).shape == (10, 4)
    assert 0.0 <= est.score(ds.test) <= 1.0
    assert len(est.history_) == 2
    np.testing.assert_array_equal(est.classes_, [0, 1, 2, 3])


def test_amrnn_classifier_is_deterministic(ds):
    kw = dict(hidden_size=4, embedding_dim=4, max_epochs=1, random_state=5)
    a = AMRNNClassifier(**kw).fit(ds.train).decision_function(ds.test)
    b = AMRNNClassifier(**kw).fit(ds.train).decision_function(ds.test)
    assert a.tobytes() == b.tobytes()


def test_score_uses_given_labels(ds):
    est = AMRNNClassifier(hidden_size=4, embedding_dim=4, max_epochs=0).fit(ds.train, np.zeros(40, int))
    y = np.ones(10, int)
    assert est.score(ds.test, y) == np.mean(est.predict(ds.test) == 1)
    assert est.score(ds.test) == np.mean(est.predict(ds.test) == [ex.answer for ex in ds.test])


def test_unfitted_raises(ds):
    with pytest.raises(NotFittedError):
        AMRNNClassifier().predict(ds.test)


@pytest.mark.parametrize("X", [[], "text", [1, 2]])
def test_bad_inputs(X):
    with pytest.raises((TypeError, ValueError)):
        AMRNNClassifier(max_epochs=0).fit(X)


def test_single_example_rejected(ds):
    with pytest.raises(TypeError):
        AMRNNClassifier(max_epochs=0).fit(ds.train[0])


def test_bad_labels(ds):
    with pytest.raises(ValidationError):
        AMRNNClassifier(max_epochs=0).fit(ds.train, np.full(40, 4))
    with pytest.raises(ValueError):
        AMRNNClassifier(max_epochs=0).fit(ds.train, np.zeros(3, int))


def test_bad_hops(ds):
    with pytest.raises(ValueError):
        AMRNNClassifier(n_hops=0, max_epochs=0).fit(ds.train)


def test_memnet_classifier(ds):
    est = MemNetClassifier(embedding_size=8, max_epochs=2, hop_search=(1, 2)).fit(ds.train, X_dev=ds.dev)
    assert est.net_.config.n_hops in (1, 2)
    assert est.predict(ds.test).shape == (10,)


def test_simple_baseline_classifier(ds, table):
    est = SimpleBaselineClassifier("longest").fit()
    assert list(est.predict(ds.test)) == [0] * 10  # single-word choices tie
    with pytest.raises(ValueError):
        SimpleBaselineClassifier("choice_most_similar").fit()
    assert SimpleBaselineClassifier("question_choice_similar", table).fit().predict(ds.test).shape == (10,)
    with pytest.raises(ValueError):
        SimpleBaselineClassifier("tallest").fit()


def test_sliding_window_classifier_picks_width(ds, table):
    est = SlidingWindowClassifier(table, search_set=(1, 2, 3)).fit(ds.dev)
    assert est.window_size_ in (1, 2, 3)
    best = max(est.search_accuracy_.values())
    assert est.window_size_ == min(w for w, a in est.search_accuracy_.items() if a == best)
    assert SlidingWindowClassifier(table, window_size=2).fit(None).window_size_ == 2


def test_pruner(ds, table):
    out = UtterancePruner(table, keep_fraction=0.5).fit().transform(ds.test)
    assert all(len(ex.story) == 2 for ex in out)
    assert [ex.id for ex in out] == [ex.id for ex in ds.test]
    with pytest.raises(ValueError):
        UtterancePruner(table, keep_fraction=0.0).fit()


def test_corruptor(ds):
    corruptor = TranscriptCorruptor(word_error_rate=0.5, random_state=2).fit(ds.train)
    a = corruptor.transform(ds.test)
    b = clone(corruptor).fit(ds.train).transform(ds.test)
    assert a == b
    assert a != list(ds.test)
    assert TranscriptCorruptor(0.0).fit(ds.train).transform(ds.test) == list(ds.test)


def test_float_integer_labels_accepted():
    exs = [Example(f"e{i}", Story([["x"]]), ["q"], [["a"], ["b"], ["c"], ["d"]], 0) for i in range(4)]
    est = SimpleBaselineClassifier("shortest").fit()
    assert est.score(exs, np.array([0.0, 0.0, 1.0, 0.0])) == 0.75
