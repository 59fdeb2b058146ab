"""Encoders that turn token-id sequences into (hidden states, initial query).

The vanilla encoder is a word embedding plus a single BiLSTM layer; the
initial query is the concatenated final cell state of both directions.
The full encoder adds character n-gram embeddings, a two-layer highway
over the concatenated embedding, a deeper BiLSTM split into context and
query layers, and a highway over the query. Each extension can be
switched off independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import BiLstm, Embedding, Highway
from .tensor import (
    DimensionError,
    EmptyInputError,
    Tensor,
    concat,
    dropout,
    embedding_lookup,
    matmul,
    narrow,
    reshape,
    stack_rows,
)

__all__ = ["EncoderOutput", "VanillaEncoder", "FullEncoder"]


@dataclass
class EncoderOutput:
    """Contextualized states (length x hidden) and the initial query vector."""

    hidden_states: Tensor
    query: Tensor


def _per_sequence(outputs, final_cell, lengths, hidden_size):
    """Slice batched BiLSTM results into per-sequence (H, query) pairs."""
    n_pos = len(outputs)
    stacked = concat(outputs, axis=1)  # (B, n_pos * hidden)
    results = []
    for i, length in enumerate(lengths):
        row = reshape(narrow(stacked, 0, i, 1), (n_pos, hidden_size))
        states = narrow(row, 0, 0, int(length))
        query = reshape(narrow(final_cell, 0, i, 1), (hidden_size,))
        results.append((states, query))
    return results


class VanillaEncoder:
    """Word embeddings into one BiLSTM layer."""

    def __init__(self, vocab_size, hidden_size, rng, embed_dim=300, init_std=0.01,
                 embedding_dropout=0.1, trainable_embeddings=True, word_matrix=None):
        self.hidden_size = hidden_size
        self.embedding_dropout = embedding_dropout
        self.embedding = Embedding(vocab_size, embed_dim, rng, init_std,
                                   matrix=word_matrix, trainable=trainable_embeddings)
        self.bilstm = BiLstm(embed_dim, hidden_size, 1, rng, init_std)

    @property
    def query_size(self):
        return self.hidden_size

    def encode_batch(self, ids, lengths, train=False, rng=None):
        """ids: (B, N) right-padded int array. Returns one EncoderOutput per row."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2 or ids.shape[1] == 0:
            raise EmptyInputError(f"expected a non-empty (B, N) id array, got shape {ids.shape}")
        table = dropout(self.embedding.table, self.embedding_dropout, train, rng)
        xs = [embedding_lookup(table, ids[:, t]) for t in range(ids.shape[1])]
        result = self.bilstm.forward_batch(xs, lengths, train, rng)
        pairs = _per_sequence(result.outputs[0], result.final_cells[0], lengths, self.hidden_size)
        return [EncoderOutput(states, query) for states, query in pairs]

    def encode(self, ids, train=False, rng=None):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise EmptyInputError("expected a non-empty id sequence")
        return self.encode_batch(ids[None, :], np.array([ids.size]), train, rng)[0]

    def parameters(self):
        for key, value in self.embedding.parameters():
            yield f"embedding.{key}", value
        for key, value in self.bilstm.parameters():
            yield f"bilstm.{key}", value


class FullEncoder:
    """Character n-grams, embedding highway, context/query BiLSTM split, query highway.

    ``ctx_layers`` lower BiLSTM layers produce the attendable states; the
    remaining ``query_layers`` read the sequence, and the final cell state
    becomes the initial query (optionally highway-transformed).
    ``query_layers`` may be zero, in which case the query is read from the
    context layer itself and, with every extension off, the encoder
    computes exactly the vanilla graph.
    """

    def __init__(self, vocab_size, hidden_size, rng, embed_dim=300, char_dim=100,
                 ngram_count=0, ctx_layers=2, query_layers=1, init_std=0.01,
                 embedding_dropout=0.1, recurrent_dropout=0.0,
                 use_char_ngrams=True, use_embedding_finetune=True, use_query_finetune=True,
                 trainable_embeddings=True, word_matrix=None, char_matrix=None,
                 ngram_ids=None):
        if ctx_layers < 1 or query_layers < 0:
            raise DimensionError(f"need ctx_layers >= 1 and query_layers >= 0, got {ctx_layers}/{query_layers}")
        if use_char_ngrams and ngram_count < 1:
            raise DimensionError("character n-grams enabled but the table is empty")
        self.hidden_size = hidden_size
        self.ctx_layers = ctx_layers
        self.embedding_dropout = embedding_dropout
        self.use_char_ngrams = use_char_ngrams
        self.ngram_ids = ngram_ids  # callable: word -> list of table rows

        self.embedding = Embedding(vocab_size, embed_dim, rng, init_std,
                                   matrix=word_matrix, trainable=trainable_embeddings)
        width = embed_dim
        self.char_embedding = None
        if use_char_ngrams:
            self.char_embedding = Embedding(ngram_count, char_dim, rng, init_std,
                                            matrix=char_matrix, trainable=trainable_embeddings)
            width += char_dim
        self.embed_width = width
        self.embedding_highway = Highway(width, 2, rng, init_std) if use_embedding_finetune else None
        self.bilstm = BiLstm(width, hidden_size, ctx_layers + query_layers, rng, init_std,
                             inter_layer_dropout=recurrent_dropout)
        self.query_highway = Highway(hidden_size, 1, rng, init_std) if use_query_finetune else None

    @property
    def query_size(self):
        return self.hidden_size

    def _char_vector(self, word):
        """Mean of the word's known n-gram embeddings; zero vector when none match."""
        ids = self.ngram_ids(word) if self.ngram_ids is not None else []
        if not ids:
            return Tensor(np.zeros(self.char_embedding.dim))
        looked = embedding_lookup(self.char_embedding.table, np.asarray(ids))
        averaging = Tensor(np.full(len(ids), 1.0 / len(ids)))
        return matmul(averaging, looked)

    def embed_tokens(self, ids, words, train=False, rng=None):
        """Per-position (B, width) embeddings for a right-padded batch.

        ``words`` holds the raw token strings per sequence so character
        n-grams can be looked up; padded positions embed as padding only.
        """
        ids = np.asarray(ids, dtype=np.int64)
        n_pos = ids.shape[1]
        table = dropout(self.embedding.table, self.embedding_dropout, train, rng)
        xs = []
        for t in range(n_pos):
            part = embedding_lookup(table, ids[:, t])
            if self.use_char_ngrams:
                chars = [
                    self._char_vector(seq[t]) if t < len(seq) else Tensor(np.zeros(self.char_embedding.dim))
                    for seq in words
                ]
                part = concat([part, stack_rows(chars)], axis=1)
            if self.embedding_highway is not None:
                part = self.embedding_highway(part)
            xs.append(part)
        return xs

    def encode_batch(self, ids, lengths, words=None, train=False, rng=None):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2 or ids.shape[1] == 0:
            raise EmptyInputError(f"expected a non-empty (B, N) id array, got shape {ids.shape}")
        if words is None:
            if self.use_char_ngrams:
                raise EmptyInputError("character n-grams need the raw token strings")
            words = [[]] * ids.shape[0]
        xs = self.embed_tokens(ids, words, train, rng)
        result = self.bilstm.forward_batch(xs, lengths, train, rng)
        context = result.outputs[self.ctx_layers - 1]
        final_cell = result.final_cells[-1]
        pairs = _per_sequence(context, final_cell, lengths, self.hidden_size)
        outputs = []
        for states, query in pairs:
            if self.query_highway is not None:
                query = self.query_highway(query)
            outputs.append(EncoderOutput(states, query))
        return outputs

    def encode(self, ids, words=None, train=False, rng=None):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise EmptyInputError("expected a non-empty id sequence")
        wrapped = [words] if words is not None else None
        return self.encode_batch(ids[None, :], np.array([ids.size]), wrapped, train, rng)[0]

    def parameters(self):
        for key, value in self.embedding.parameters():
            yield f"embedding.{key}", value
        if self.char_embedding is not None:
            for key, value in self.char_embedding.parameters():
                yield f"char_embedding.{key}", value
        if self.embedding_highway is not None:
            for key, value in self.embedding_highway.parameters():
                yield f"embedding_highway.{key}", value
        for key, value in self.bilstm.parameters():
            yield f"bilstm.{key}", value
        if self.query_highway is not None:
            for key, value in self.query_highway.parameters():
                yield f"query_highway.{key}", value
