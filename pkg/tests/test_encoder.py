import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from amrnn.autodiff import DimensionError, cosine_similarity, finite_diff_check, getitem, sum_all
from amrnn.data import Story
from amrnn.encoder import (BiGruEncoder, GruParams, encode_bidirectional, gru_step, load_checkpoint,
                           question_vector, save_checkpoint, story_word_vectors)

VOCAB = ["a", "b", "c", "d", "e"]


def scalar_params(**values):
    p = GruParams.zeros(1, 1)
    for name, v in values.items():
        setattr(p, name, np.full(getattr(p, name).shape, float(v)))
    return p


def np_step(p, x, h):
    """Plain-numpy GRU step used as an independent oracle."""
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    z = sig(p.W_z @ x + p.U_z @ h + p.b_z)
    r = sig(p.W_r @ x + p.U_r @ h + p.b_r)
    cand = np.tanh(p.W_h @ x + p.U_h @ (r * h) + p.b_h)
    return (1 - z) * h + z * cand


def zero_encoder(h=2, d=3):
    enc = BiGruEncoder(VOCAB, hidden_size=h, embedding_dim=d)
    enc.set_parameters({k: np.zeros_like(v) for k, v in enc.parameters().items()})
    return enc


# -- gru_step ------------------------------------------------------------------

def test_zero_params_zero_state():
    out = gru_step(GruParams.zeros(3, 2), np.ones(3), np.zeros(2))
    np.testing.assert_array_equal(out.value, [0.0, 0.0])


def test_saturated_update_gate():
    out = gru_step(scalar_params(b_z=30.0), np.array([1.0]), np.array([0.0]))
    assert abs(out.value[0]) < 1e-12


def test_half_tanh_one():
    p = scalar_params(b_r=30.0, W_h=1.0, U_h=1.0)
    out = gru_step(p, np.array([1.0]), np.array([0.0]))
    assert out.value[0] == pytest.approx(0.5 * math.tanh(1.0), abs=1e-12)
    assert out.value[0] == pytest.approx(0.38079, abs=1e-5)


def test_gru_shape_mismatch():
    with pytest.raises(DimensionError):
        gru_step(GruParams.zeros(3, 2), np.ones(4), np.zeros(2))


def test_gru_step_matches_numpy_oracle():
    rng = np.random.default_rng(5)
    p = GruParams.init(4, 3, rng)
    p.b_z, p.b_r, p.b_h = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
    x, h = rng.normal(size=4), rng.uniform(-1, 1, size=3)
    np.testing.assert_allclose(gru_step(p, x, h).value, np_step(p, x, h), rtol=0, atol=1e-14)


@settings(max_examples=50)
@given(st.integers(0, 10_000), arrays(np.float64, 3, elements=st.floats(-0.999, 0.999)),
       arrays(np.float64, 2, elements=st.floats(-3, 3)))
def test_gru_output_bounded(seed, h_prev, x):
    # inputs kept moderate: tanh rounds to exactly 1.0 in double precision past ~19
    rng = np.random.default_rng(seed)
    p = GruParams.init(2, 3, rng)
    for name in ("b_z", "b_r", "b_h"):
        setattr(p, name, rng.normal(size=3))
    assert np.all(np.abs(gru_step(p, x, h_prev).value) < 1)


def test_gru_step_gradient_check():
    rng = np.random.default_rng(11)
    p = GruParams.init(3, 2, rng)
    h0 = rng.uniform(-0.5, 0.5, size=2)
    f = lambda x: getitem(gru_step(p, x, h0), 1)
    for _ in range(5):
        assert finite_diff_check(f, rng.normal(size=3)) < 1e-4


def test_init_is_glorot_bounded_with_zero_biases():
    p = GruParams.init(5, 7, np.random.default_rng(0))
    assert np.abs(p.W_z).max() <= math.sqrt(6 / 12)
    assert np.abs(p.U_h).max() <= math.sqrt(6 / 14)
    assert not p.b_z.any() and not p.b_r.any() and not p.b_h.any()


# -- bidirectional encoding ---------------------------------------------------------

def random_encoder(h=3, d=4, seed=0):
    enc = BiGruEncoder(VOCAB, hidden_size=h, embedding_dim=d, seed=seed)
    rng = np.random.default_rng(seed + 100)
    params = enc.parameters()
    for k in params:
        if k.split(".")[-1].startswith("b_"):
            params[k] = rng.normal(scale=0.5, size=params[k].shape)
    enc.set_parameters(params)
    return enc


def oracle_states(enc, words):
    x = [enc.embedding[:, enc.index[w]] for w in words]
    hf, hb = np.zeros(enc.hidden_size), np.zeros(enc.hidden_size)
    fwd, bwd = [], []
    for t in range(len(words)):
        hf = np_step(enc.forward, x[t], hf)
        fwd.append(hf)
    for t in reversed(range(len(words))):
        hb = np_step(enc.backward, x[t], hb)
        bwd.append(hb)
    return np.array(fwd), np.array(bwd[::-1])


def test_empty_sequence_rejected():
    with pytest.raises(ValueError):
        encode_bidirectional(random_encoder(), [])


def test_single_word_is_single_step():
    enc = random_encoder()
    yf, yb = encode_bidirectional(enc, ["c"])
    x = enc.embedding[:, enc.index["c"]]
    np.testing.assert_allclose(yf.value[0], np_step(enc.forward, x, np.zeros(3)), atol=1e-14)
    np.testing.assert_allclose(yb.value[0], np_step(enc.backward, x, np.zeros(3)), atol=1e-14)


def test_zero_params_give_zero_states():
    yf, yb = encode_bidirectional(zero_encoder(), ["a", "b", "c"])
    assert not yf.value.any() and not yb.value.any()


def test_reversal_symmetry_with_shared_params():
    enc = random_encoder()
    enc.backward = GruParams(**{n: v.copy() for n, v in enc.forward.items()})
    words = ["a", "d", "b", "e", "c"]
    yf, _ = encode_bidirectional(enc, words[::-1])
    _, yb = encode_bidirectional(enc, words)
    np.testing.assert_array_equal(yf.value, yb.value[::-1])


def test_states_match_step_by_step_oracle():
    enc = random_encoder(seed=3)
    words = ["b", "a", "e", "e", "d"]
    yf, yb = encode_bidirectional(enc, words)
    of, ob = oracle_states(enc, words)
    np.testing.assert_allclose(yf.value, of, atol=1e-13)
    np.testing.assert_allclose(yb.value, ob, atol=1e-13)


def test_question_vector_zero_params():
    np.testing.assert_array_equal(question_vector(zero_encoder(h=2), ["a", "b", "c"]).value, np.zeros(4))


def test_question_vector_single_word():
    enc = random_encoder()
    yf, yb = encode_bidirectional(enc, ["e"])
    np.testing.assert_array_equal(question_vector(enc, ["e"]).value, np.concatenate([yf.value[0], yb.value[0]]))


def test_question_vector_four_steps_manual():
    enc = random_encoder(seed=9)
    words = ["d", "a", "c", "b"]
    of, ob = oracle_states(enc, words)
    expected = np.concatenate([of[-1], ob[0]])
    np.testing.assert_allclose(question_vector(enc, words).value, expected, atol=1e-13)


def test_unknown_words_use_reserved_index():
    enc = random_encoder()
    assert enc.ids(["zzz", "a"])[0] == 0
    np.testing.assert_array_equal(question_vector(enc, ["zzz"]).value, question_vector(enc, ["qqq"]).value)


# -- story encoding ------------------------------------------------------------------

def test_two_four_word_sentences():
    enc = random_encoder()
    story = Story([["a", "b", "c", "d"], ["e", "a", "b", "c"]])
    s = story_word_vectors(enc, story)
    assert s.word_vectors.shape == (8, 6)
    assert list(np.flatnonzero(s.eos_mask) + 1) == [4, 8]


def test_single_word_story():
    s = story_word_vectors(random_encoder(), Story([["a"]]))
    assert s.word_vectors.shape == (1, 6) and list(s.eos_mask) == [True]


def test_zero_params_story():
    s = story_word_vectors(zero_encoder(), Story([["a", "b"], ["c"]]))
    assert not s.word_vectors.value.any()
    assert list(s.eos_mask) == [False, True, True]


def test_story_is_one_flat_sequence():
    enc = random_encoder(seed=4)
    story = Story([["a", "b"], ["c"], ["d", "e", "a"]])
    s = story_word_vectors(enc, story)
    yf, yb = encode_bidirectional(enc, ["a", "b", "c", "d", "e", "a"])
    np.testing.assert_array_equal(s.word_vectors.value, np.concatenate([yf.value, yb.value], axis=1))


def test_padded_batch_matches_single_sequences():
    from amrnn.encoder import story_batch
    enc = random_encoder(seed=2)
    stories = [Story([["a"]]), Story([["a", "b", "c"], ["d", "e"]]), Story([["e", "d"]])]
    batch = story_batch(enc, stories)
    for b, story in enumerate(stories):
        single = story_word_vectors(enc, story)
        n = len(story.words)
        np.testing.assert_allclose(batch.word_vectors.value[b, :n], single.word_vectors.value, atol=1e-14)
        assert not batch.valid[b, n:].any()


def test_five_step_encoding_gradient_check():
    enc = random_encoder(h=3, d=2, seed=7)
    words = ["a", "b", "c", "d", "e"]
    target = np.random.default_rng(0).normal(size=6)
    name = "forward.U_r"
    base = enc.parameters()[name].copy()

    def f(theta):
        view = enc.view({**enc.parameters(), name: theta})
        return cosine_similarity(question_vector(view, words), target)

    assert finite_diff_check(f, base) < 1e-4

    def g(emb):
        view = enc.view({**enc.parameters(), "embedding": emb})
        s = story_word_vectors(view, Story([words]))
        return sum_all(cosine_similarity(s.word_vectors, target))

    assert finite_diff_check(g, enc.embedding.copy()) < 1e-4


def test_shared_parameter_count():
    enc = BiGruEncoder(VOCAB, hidden_size=4, embedding_dim=3)
    V = len(enc.vocabulary)
    per_direction = 3 * (4 * 3) + 3 * (4 * 4) + 3 * 4
    assert enc.n_parameters() == 3 * V + 2 * per_direction


# -- checkpoints -----------------------------------------------------------------------

def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    enc = random_encoder(seed=12)
    path = tmp_path / "m.json"
    save_checkpoint(path, enc, {"n_hops": 2})
    loaded, extra = load_checkpoint(path)
    assert extra == {"n_hops": 2}
    assert loaded.vocabulary == enc.vocabulary
    assert (loaded.hidden_size, loaded.embedding_dim) == (enc.hidden_size, enc.embedding_dim)
    for k, v in enc.parameters().items():
        assert loaded.parameters()[k].tobytes() == v.tobytes()
    save_checkpoint(tmp_path / "again.json", loaded, extra)
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError, match="checkpoint"):
        load_checkpoint(p)
