import numpy as np
import pytest

from amrnn.data import load_dataset, load_embedding_table
from amrnn.synthetic import (TaskConfigError, TaskSpec, generate, keyword_oracle, synthetic_embeddings,
                             two_fact_oracle, write_task)


def test_zero_examples_gives_empty_splits():
    assert generate(TaskSpec(n_examples={"train": 0, "dev": 0, "test": 0})).sizes == (0, 0, 0)


@pytest.mark.parametrize("kind", ["keyword_match", "two_fact"])
def test_same_seed_same_dataset(kind):
    spec = TaskSpec(kind=kind, story_utterances=8, n_examples={"train": 30, "dev": 5, "test": 5}, seed=9)
    assert generate(spec) == generate(spec)
    assert generate(spec) != generate(TaskSpec(kind=kind, story_utterances=8,
                                               n_examples={"train": 30, "dev": 5, "test": 5}, seed=10))


def test_keyword_oracle_is_perfect():
    ds = generate(TaskSpec(n_examples={"train": 500, "dev": 0, "test": 0}))
    assert np.mean([keyword_oracle(ex) == ex.answer for ex in ds.train]) == 1.0


def test_two_fact_oracle_is_perfect():
    ds = generate(TaskSpec(kind="two_fact", story_utterances=8, n_examples={"train": 500}))
    assert np.mean([two_fact_oracle(ex) == ex.answer for ex in ds.train]) == 1.0


@pytest.mark.parametrize("kind", ["keyword_match", "two_fact"])
def test_answer_positions_uniform(kind):
    spec = TaskSpec(kind=kind, story_utterances=8, n_examples={"train": 1000}, seed=4)
    counts = np.bincount([ex.answer for ex in generate(spec).train], minlength=4)
    sigma = np.sqrt(1000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 250) <= 3 * sigma), counts


def test_two_fact_markers_never_share_an_utterance():
    ds = generate(TaskSpec(kind="two_fact", story_utterances=8, n_examples={"train": 300}, seed=2))
    for ex in ds.train:
        key = ex.question[-1]
        key_utts = [u for u in ex.story.utterances if key in u]
        assert len(key_utts) == 1
        bridge = key_utts[0][key_utts[0].index(key) + 1]
        answer = ex.choices[ex.answer][0]
        assert bridge.startswith("b")
        assert answer not in key_utts[0]
        assert any(bridge in u and answer in u for u in ex.story.utterances)


def test_keyword_distractors_are_unrelated():
    ds = generate(TaskSpec(n_examples={"train": 200}, seed=5))
    for ex in ds.train:
        key = ex.question[-1]
        for c, choice in enumerate(ex.choices):
            linked = any(key in u and u.index(key) + 1 < len(u) and u[u.index(key) + 1] == choice[0]
                         for u in ex.story.utterances)
            assert linked == (c == ex.answer)


def test_examples_are_valid_and_shaped():
    spec = TaskSpec(story_utterances=5, words_per_utterance=3, n_examples={"train": 50})
    for ex in generate(spec).train:
        ex.validate()
        assert len(ex.story) == 5
        assert all(len(u) == 3 for u in ex.story.utterances)
        assert len({c[0] for c in ex.choices}) == 4


@pytest.mark.parametrize("kw", [{"vocab_size": 7}, {"vocab_size": 12}, {"kind": "three_fact"},
                                {"words_per_utterance": 1}, {"kind": "two_fact", "story_utterances": 6},
                                {"distractor_facts": 4}])
def test_invalid_specs(kw):
    with pytest.raises(TaskConfigError):
        generate(TaskSpec(**kw))


def test_write_task_files(tmp_path):
    spec = TaskSpec(n_examples={"train": 10, "dev": 2, "test": 3})
    data, emb = write_task(spec, tmp_path, dimension=8)
    assert data.name == "keyword_match.jsonl" and emb.name == "keyword_match.emb.txt"
    assert load_dataset(data) == generate(spec)
    table = load_embedding_table(emb)
    assert table.dimension == 8
    for w, v in synthetic_embeddings(spec, 8).entries.items():
        np.testing.assert_array_equal(table.entries[w], v)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12
