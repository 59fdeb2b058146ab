"""Encoder contracts: vanilla and full variants, ablations, batching invariance."""

import numpy as np
import pytest

from conftest import check_gradients
from iram.data import NgramInventory, Example
from iram.encoders import FullEncoder, VanillaEncoder
from iram.tensor import EmptyInputError, Tensor, no_grad, tensor_sum


def make_vanilla(seed=0, vocab=10, hidden=6, embed=4, dropout=0.0, std=0.2):
    return VanillaEncoder(vocab, hidden, np.random.default_rng(seed), embed_dim=embed,
                          init_std=std, embedding_dropout=dropout)


def ngram_inventory():
    corpus = [Example(["spark", "dull", "fine", "arc"], 0)]
    return NgramInventory.from_corpus(corpus, max_len=3)


def make_full(seed=0, vocab=10, hidden=6, embed=4, char=3, inventory=None, **flags):
    inventory = inventory or ngram_inventory()
    return FullEncoder(vocab, hidden, np.random.default_rng(seed), embed_dim=embed,
                       char_dim=char, ngram_count=len(inventory), init_std=0.2,
                       embedding_dropout=0.0, ngram_ids=inventory.ids_of, **flags)


class TestVanillaEncoder:
    def test_single_token(self):
        enc = make_vanilla()
        out = enc.encode(np.array([3]))
        assert out.hidden_states.shape == (1, 6)
        assert out.query.shape == (6,)

    def test_zero_weights_make_identical_positions(self):
        enc = make_vanilla()
        for name, p in enc.parameters():
            p.data[...] = 0.0
        # keep the initialized forget biases
        for _, direction in [("fw", enc.bilstm.directions[0][0]), ("bw", enc.bilstm.directions[0][1])]:
            direction.bias.data[3:6] = 1.0
        out = enc.encode(np.array([1, 2, 3, 4]))
        rows = out.hidden_states.data
        for row in rows[1:]:
            np.testing.assert_allclose(row, rows[0], atol=1e-15)

    def test_batched_H_matches_lone_encoding(self):
        enc = make_vanilla(seed=3)
        ids = np.array([4, 2, 7])
        alone = enc.encode(ids)
        padded = np.zeros((2, 5), dtype=np.int64)
        padded[0, :3] = ids
        padded[1] = [1, 3, 5, 6, 2]
        batched = enc.encode_batch(padded, np.array([3, 5]))
        np.testing.assert_allclose(batched[0].hidden_states.data, alone.hidden_states.data, atol=1e-9)
        np.testing.assert_allclose(batched[0].query.data, alone.query.data, atol=1e-9)

    def test_query_uses_true_final_timestep(self):
        # identical to the above but focused on the query of the shorter sequence
        enc = make_vanilla(seed=4)
        short = np.array([5, 1])
        alone = enc.encode(short)
        padded = np.zeros((2, 4), dtype=np.int64)
        padded[0] = [2, 2, 3, 4]
        padded[1, :2] = short
        batched = enc.encode_batch(padded, np.array([4, 2]))
        np.testing.assert_allclose(batched[1].query.data, alone.query.data, atol=1e-12)

    def test_empty_sequence(self):
        with pytest.raises(EmptyInputError):
            make_vanilla().encode(np.array([], dtype=np.int64))

    def test_gradients_end_to_end(self):
        enc = make_vanilla(seed=5, vocab=6, hidden=4, embed=3, std=0.4)
        ids = np.array([[1, 2, 3], [4, 5, 0]])
        lengths = np.array([3, 2])
        params = [p for _, p in enc.parameters()]

        def loss():
            outs = enc.encode_batch(ids, lengths)
            total = None
            for out in outs:
                part = tensor_sum(out.hidden_states) + tensor_sum(out.query)
                total = part if total is None else total + part
            return total

        check_gradients(loss, params)


class TestFullEncoder:
    def test_char_vector_of_unknown_word_is_zero(self):
        enc = make_full()
        vec = enc._char_vector("zzzzzz")
        np.testing.assert_array_equal(vec.data, np.zeros(3))

    def test_char_vector_single_ngram_is_that_row(self):
        inventory = NgramInventory(["q"], 1, 3)
        enc = make_full(inventory=inventory)
        np.testing.assert_allclose(enc._char_vector("q").data,
                                   enc.char_embedding.table.data[0], atol=1e-15)

    def test_char_vector_is_mean_of_known_ngrams(self):
        inventory = ngram_inventory()
        enc = make_full(inventory=inventory)
        ids = inventory.ids_of("arc")
        assert len(ids) > 1
        expected = enc.char_embedding.table.data[ids].mean(axis=0)
        np.testing.assert_allclose(enc._char_vector("arc").data, expected, atol=1e-12)

    def test_encode_shapes_and_layer_split(self):
        enc = make_full(ctx_layers=2, query_layers=1)
        ids = np.array([2, 5, 1])
        out = enc.encode(ids, ["spark", "dull", "arc"])
        assert out.hidden_states.shape == (3, 6)
        assert out.query.shape == (6,)
        assert enc.bilstm.num_layers == 3

    def test_char_ngrams_ablation_narrows_embedding(self):
        enc = make_full(use_char_ngrams=False)
        assert enc.embed_width == 4
        assert enc.char_embedding is None

    def test_embedding_finetune_ablation_passes_raw_concat(self):
        with_hw = make_full(seed=9)
        without = make_full(seed=9, use_embedding_finetune=False)
        assert without.embedding_highway is None
        ids = np.array([[3, 4]])
        words = [["spark", "arc"]]
        raw = without.embed_tokens(ids, words)
        cooked = with_hw.embed_tokens(ids, words)
        # same seed, same draw order up to the highway, so the raw parts agree
        assert raw[0].shape == cooked[0].shape == (1, 7)

    def test_query_finetune_ablation_changes_only_query(self):
        enc = make_full(seed=11)
        ids = np.array([2, 5])
        words = ["spark", "dull"]
        with no_grad():
            full_out = enc.encode(ids, words)
            enc_ablated = enc
            highway = enc_ablated.query_highway
            enc_ablated.query_highway = None
            raw_out = enc_ablated.encode(ids, words)
            enc_ablated.query_highway = highway
        np.testing.assert_allclose(full_out.hidden_states.data, raw_out.hidden_states.data, atol=1e-12)
        expected = highway(Tensor(raw_out.query.data)).data
        np.testing.assert_allclose(full_out.query.data, expected, atol=1e-12)

    def test_reduces_to_vanilla_when_everything_is_off(self):
        # identical rng draws produce identical parameters, so the graphs match
        vanilla = VanillaEncoder(12, 6, np.random.default_rng(21), embed_dim=4,
                                 init_std=0.2, embedding_dropout=0.0)
        reduced = FullEncoder(12, 6, np.random.default_rng(21), embed_dim=4,
                              ctx_layers=1, query_layers=0, init_std=0.2,
                              embedding_dropout=0.0, use_char_ngrams=False,
                              use_embedding_finetune=False, use_query_finetune=False)
        ids = np.array([[3, 7, 1], [2, 4, 0]])
        lengths = np.array([3, 2])
        with no_grad():
            a = vanilla.encode_batch(ids, lengths)
            b = reduced.encode_batch(ids, lengths)
        for out_a, out_b in zip(a, b):
            np.testing.assert_allclose(out_a.hidden_states.data, out_b.hidden_states.data, atol=1e-12)
            np.testing.assert_allclose(out_a.query.data, out_b.query.data, atol=1e-12)

    def test_gradients_end_to_end(self):
        enc = make_full(seed=13, vocab=8, hidden=4, embed=3, char=2)
        ids = np.array([[1, 2], [3, 4]])
        lengths = np.array([2, 1])
        words = [["spark", "arc"], ["dull", "fine"]]
        params = [p for _, p in enc.parameters()]

        def loss():
            outs = enc.encode_batch(ids, lengths, words)
            total = None
            for out in outs:
                part = tensor_sum(out.hidden_states) + tensor_sum(out.query)
                total = part if total is None else total + part
            return total

        check_gradients(loss, params)
