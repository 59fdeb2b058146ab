"""Iterative recursive attention with the pairwise-overlap penalty.

A GRU controller refines the query over a fixed number of iterations.
Each iteration scores the attendable states with bilinear attention,
collapses them into a summary, passes the summary through a highway
layer, and (except after the last iteration) appends the transformed
summary to the attendable set so later iterations can reuse it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import GruCell, Highway, gaussian
from .tensor import (
    EmptyInputError,
    Tensor,
    concat,
    matmul,
    reshape,
    scale,
    softmax,
    stack_rows,
    sub,
    tensor_sum,
    transpose,
    zeros,
)

__all__ = [
    "IramConfig",
    "AttentionParams",
    "AttentionTrace",
    "bilinear_scores",
    "summarize",
    "iterate",
    "attention_penalty",
    "mean_offdiagonal_overlap",
]


@dataclass
class IramConfig:
    """Iteration count and regularization strength."""

    iterations: int = 3
    gamma: float = 0.0003

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"need at least one attention iteration, got {self.iterations}")
        if self.gamma < 0:
            raise ValueError(f"regularization strength must be nonnegative, got {self.gamma}")


class AttentionParams:
    """Bilinear scoring matrix, GRU query controller, and summary highway."""

    def __init__(self, query_size, hidden_size, rng, init_std=0.01):
        self.query_size = query_size
        self.hidden_size = hidden_size
        self.bilinear_w = gaussian(rng, (query_size, hidden_size), init_std)
        self.controller = GruCell(hidden_size, query_size, rng, init_std)
        self.summary_highway = Highway(hidden_size, 1, rng, init_std)

    def parameters(self):
        yield "bilinear_w", self.bilinear_w
        for key, value in self.controller.parameters():
            yield f"controller.{key}", value
        for key, value in self.summary_highway.parameters():
            yield f"summary_highway.{key}", value


@dataclass
class AttentionTrace:
    """Everything one attention run produced.

    ``matrix`` has one row per iteration, padded on the right with exact
    zeros for summary columns that did not exist yet: row t (1-indexed)
    attends over the N inputs plus t-1 earlier summaries, so it carries
    T-t trailing zeros out of the N+T-1 total columns.
    """

    matrix: Tensor
    summaries: list = field(default_factory=list)
    queries: list = field(default_factory=list)
    input_length: int = 0

    @property
    def iterations(self):
        return self.matrix.shape[0]


def _as_state_matrix(hidden_states):
    if isinstance(hidden_states, Tensor):
        return hidden_states
    if len(hidden_states) == 0:
        raise EmptyInputError("attention needs at least one hidden state")
    return stack_rows(list(hidden_states))


def bilinear_scores(query, hidden_states, params, mask=None):
    """Attention weights softmax(q W h_i) over the rows of the state matrix."""
    states = _as_state_matrix(hidden_states)
    if states.shape[0] == 0:
        raise EmptyInputError("attention needs at least one hidden state")
    scores = matmul(matmul(query, params.bilinear_w), transpose(states))
    return softmax(scores, mask)


def summarize(weights, hidden_states):
    """Weighted combination of states: sum_i a_i h_i."""
    return matmul(weights, _as_state_matrix(hidden_states))


def iterate(hidden_states, initial_query, params, config, mask=None):
    """Run the full attention loop and record its trace.

    The summary produced by the final iteration is never appended, so the
    attendable set grows exactly ``iterations - 1`` times. The controller
    state doubles as the query; its input is the highway-transformed
    summary of the previous iteration.
    """
    states = _as_state_matrix(hidden_states)
    n_inputs = states.shape[0]
    if n_inputs == 0:
        raise EmptyInputError("attention needs at least one hidden state")
    steps = config.iterations

    if mask is None:
        valid = np.ones(n_inputs, dtype=bool)
    else:
        valid = np.asarray(mask, dtype=bool).copy()

    query = initial_query
    queries = [query]
    summaries = []
    rows = []
    for t in range(1, steps + 1):
        weights = bilinear_scores(query, states, params, valid)
        raw_summary = summarize(weights, states)
        summary = params.summary_highway(raw_summary)
        rows.append(weights)
        summaries.append(summary)
        if t < steps:
            states = concat([states, reshape(summary, (1, params.hidden_size))], axis=0)
            valid = np.append(valid, True)
        query = params.controller.step(summary, query)
        queries.append(query)

    width = n_inputs + steps - 1
    padded = []
    for row in rows:
        missing = width - row.shape[0]
        padded.append(concat([row, zeros(missing)]) if missing else row)
    return AttentionTrace(
        matrix=stack_rows(padded),
        summaries=summaries,
        queries=queries,
        input_length=n_inputs,
    )


def attention_penalty(trace, config):
    """Scaled sum of pairwise dot products between attention iterations.

    gamma / (2T) times the off-diagonal mass of the Gram matrix of the
    trace rows; the half accounts for symmetric pairs and 1/T for the
    number of comparisons. Both reductions read the same Gram matrix so
    a single iteration, or rows with disjoint supports, give exactly 0.
    """
    rows = trace.matrix.shape[0]
    gram = matmul(trace.matrix, transpose(trace.matrix))
    eye = Tensor(np.eye(rows))
    off_diagonal = sub(tensor_sum(gram), tensor_sum(gram * eye))
    return scale(off_diagonal, config.gamma / (2.0 * rows))


def mean_offdiagonal_overlap(trace):
    """Average pairwise row overlap, sum_{i != j} [A A^T]_{ij} / (T (T-1)).

    Analysis-only (plain float); zero when a single iteration was run.
    """
    a = trace.matrix.data
    rows = a.shape[0]
    if rows < 2:
        return 0.0
    gram = a @ a.T
    return float((gram.sum() - np.trace(gram)) / (rows * (rows - 1)))
