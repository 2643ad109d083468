import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from amrnn.data import (DataFormatError, Dataset, EmbeddingTable, Example, Story, ValidationError,
                        bag_vector, corrupt_transcript, corrupt_transcript_with_count, load_dataset,
                        load_embedding_table, prune_story, save_dataset, tokenize)


def record(ex_id, split="train", n_choices=4, answer=0, **overrides):
    rec = {
        "id": ex_id, "split": split,
        "story": [["the", "cat", "sat"], ["it", "slept"]],
        "question": ["where", "did", "it", "sit"],
        "choices": [["mat"], ["hat"], ["bed"], ["floor"]][:n_choices],
        "answer": answer,
    }
    rec.update(overrides)
    return rec


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


# -- embedding tables ----------------------------------------------------------

def test_load_embedding_table(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("a 1.0 2.0\nb 3.0 4.0\n")
    table = load_embedding_table(p)
    assert table.dimension == 2 and len(table) == 2
    np.testing.assert_array_equal(table.entries["b"], [3.0, 4.0])


def test_load_embedding_table_300_dimensions(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("word " + " ".join(str(i / 7) for i in range(300)) + "\n")
    assert load_embedding_table(p).dimension == 300


def test_inconsistent_dimension_names_line(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("a 1.0\nb 2.0 3.0\n")
    with pytest.raises(DataFormatError, match="line 2"):
        load_embedding_table(p)


def test_empty_embedding_file(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("")
    with pytest.raises(DataFormatError):
        load_embedding_table(p)


# -- datasets --------------------------------------------------------------------

def test_load_two_records(tmp_path):
    ds = load_dataset(write_jsonl(tmp_path / "d.jsonl", [record("x1"), record("x2", split="test")]))
    assert ds.sizes == (1, 0, 1)
    assert ds.train[0].story.words == ["the", "cat", "sat", "it", "slept"]


def test_three_choices_rejected_with_id(tmp_path):
    p = write_jsonl(tmp_path / "d.jsonl", [record("bad-one", n_choices=3)])
    with pytest.raises(ValidationError, match="bad-one"):
        load_dataset(p)


@pytest.mark.parametrize("answer", [-1, 4])
def test_answer_out_of_range(tmp_path, answer):
    with pytest.raises(ValidationError, match="q7"):
        load_dataset(write_jsonl(tmp_path / "d.jsonl", [record("q7", answer=answer)]))


def test_missing_field_names_id(tmp_path):
    rec = record("q9")
    del rec["question"]
    with pytest.raises(ValidationError, match="q9.*question"):
        load_dataset(write_jsonl(tmp_path / "d.jsonl", [rec]))


def test_duplicate_ids_rejected(tmp_path):
    with pytest.raises(ValidationError, match="dup"):
        load_dataset(write_jsonl(tmp_path / "d.jsonl", [record("dup"), record("dup", split="dev")]))


def test_full_corpus_shaped_split(tmp_path):
    counts = {"train": 717, "dev": 124, "test": 122}
    recs = [record(f"{s}-{i}", split=s) for s, n in counts.items() for i in range(n)]
    ds = load_dataset(write_jsonl(tmp_path / "d.jsonl", recs))
    assert ds.sizes == (717, 124, 122)
    assert sum(ds.sizes) == 963


def test_dataset_round_trip(tmp_path):
    recs = [record("a"), record("b", split="dev", answer=3), record("c", split="test", answer=2)]
    ds = load_dataset(write_jsonl(tmp_path / "d.jsonl", recs))
    save_dataset(ds, tmp_path / "out.jsonl")
    again = load_dataset(tmp_path / "out.jsonl")
    assert again == ds
    save_dataset(again, tmp_path / "out2.jsonl")
    assert (tmp_path / "out2.jsonl").read_bytes() == (tmp_path / "out.jsonl").read_bytes()


@given(st.lists(st.lists(st.sampled_from(["a", "b", "c", "d'x"]), min_size=1, max_size=4),
                min_size=1, max_size=4),
       st.integers(0, 3), st.sampled_from(["train", "dev", "test"]))
def test_record_round_trip_property(story, answer, split):
    ex = Example("e", Story(story), ["q"], [["a"], ["b"], ["c"], ["d"]], answer, split)
    assert Example.from_record(json.loads(json.dumps(ex.to_record()))) == ex


def test_tokenize_keeps_apostrophes():
    assert tokenize("It's a Cat, isn't it?") == ["it's", "a", "cat", "isn't", "it"]


def test_story_eos_mask():
    story = Story([["a", "b", "c", "d"], ["e", "f", "g", "h"]])
    assert list(np.flatnonzero(story.eos_mask) + 1) == [4, 8]


# -- bag vectors -----------------------------------------------------------------

TABLE = EmbeddingTable(2, {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0]), "c": np.array([1.0, 2.0])})


def test_bag_vector_examples():
    np.testing.assert_array_equal(bag_vector(["c"], TABLE), [1, 2])
    np.testing.assert_array_equal(bag_vector(["a", "b"], TABLE), [1, 1])
    np.testing.assert_array_equal(bag_vector(["a", "zzz"], TABLE), [1, 0])


@given(st.lists(st.sampled_from(["a", "b", "c", "zzz"]), max_size=8), st.randoms())
def test_bag_vector_permutation_invariant(words, random):
    shuffled = list(words)
    random.shuffle(shuffled)
    np.testing.assert_allclose(bag_vector(shuffled, TABLE), bag_vector(words, TABLE), atol=1e-12)


# -- pruning -----------------------------------------------------------------------

def angle_table():
    # utterance i is word u{i}; cosines to the question direction are set directly
    sims = [0.9, 0.1, 0.8, 0.2]
    entries = {"q": np.array([1.0, 0.0])}
    for i, s in enumerate(sims):
        entries[f"u{i}"] = np.array([s, np.sqrt(1 - s * s)])
    return EmbeddingTable(2, entries)


def test_prune_keeps_most_similar_in_order():
    story = Story([["u0"], ["u1"], ["u2"], ["u3"]])
    pruned = prune_story(story, ["q"], 0.5, angle_table())
    assert pruned.utterances == (("u0",), ("u2",))


def test_prune_keep_all_is_identity():
    story = Story([["u0"], ["u1"], ["u2"]])
    assert prune_story(story, ["q"], 1.0, angle_table()) == story


def test_prune_keeps_at_least_one():
    story = Story([["u3"]])
    assert prune_story(story, ["q"], 0.1, angle_table()) == story


def test_prune_rejects_bad_fraction():
    with pytest.raises(ValueError):
        prune_story(Story([["u0"]]), ["q"], 0.0, angle_table())


@given(st.lists(st.sampled_from(["u0", "u1", "u2", "u3", "zzz"]), min_size=1, max_size=12),
       st.floats(0.01, 1.0))
def test_prune_output_is_subsequence(utt_words, keep):
    story = Story([[w] for w in utt_words])
    pruned = prune_story(story, ["q"], keep, angle_table())
    it = iter(story.utterances)
    assert all(any(u == v for v in it) for u in pruned.utterances)
    assert len(pruned) == max(1, int(np.ceil(keep * len(story) - 1e-9)))


# -- corruption ----------------------------------------------------------------------

LEXICON = ["x", "y", "z"]


def test_zero_rate_is_identity():
    story = Story([["a", "b"], ["c"]])
    assert corrupt_transcript(story, 0.0, 1, LEXICON) == story


def test_never_empties_an_utterance():
    story = Story([["a", "b"]])
    out = corrupt_transcript(story, 1.0, 3, LEXICON, p_substitute=0.0, p_delete=1.0)
    assert out.utterances == (("b",),)


def test_rate_03_alters_about_300_of_1000():
    story = Story([[f"w{i}" for i in range(j, j + 10)] for j in range(0, 1000, 10)])
    _, n = corrupt_transcript_with_count(story, 0.3, 7, LEXICON)
    assert abs(n - 300) <= 45


def test_empty_lexicon_with_noise_is_error():
    with pytest.raises(ValueError):
        corrupt_transcript(Story([["a"]]), 0.5, 0, [])


@given(st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=6), min_size=1, max_size=6),
       st.floats(0, 1), st.integers(0, 2**31))
def test_corruption_properties(utts, rate, seed):
    story = Story(utts)
    a = corrupt_transcript(story, rate, seed, LEXICON)
    b = corrupt_transcript(story, rate, seed, LEXICON)
    assert a == b
    assert len(a) == len(story)
    assert all(len(u) >= 1 for u in a.utterances)


def test_dataset_split_lookup():
    ds = Dataset()
    with pytest.raises(ValueError):
        ds.split("holdout")
