"""Parameterized layers: embeddings, highway, GRU cell, BiLSTM, maxout.

All weights start from Gaussian(0, init_std); highway gate biases and LSTM
forget-gate biases start at 1 so early training passes inputs through.
Layers expose ``parameters()`` as (path, Tensor) pairs for the optimizer
and for the JSON parameter manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tensor import (
    DimensionError,
    EmptyInputError,
    Tensor,
    add,
    concat,
    dropout,
    embedding_lookup,
    matmul,
    max_pool_cols,
    narrow,
    relu,
    reshape,
    sigmoid,
    tanh,
)

__all__ = [
    "gaussian",
    "Embedding",
    "Highway",
    "GruCell",
    "LstmCell",
    "BiLstm",
    "BiLstmOutput",
    "MaxoutNetwork",
    "manifest_dump",
    "manifest_load",
    "manifest_assign",
]


def gaussian(rng, shape, std=0.01):
    """Fresh trainable parameter drawn from N(0, std^2)."""
    return Tensor(rng.normal(0.0, std, shape), requires_grad=True)


def _bias(shape, value=0.0):
    return Tensor(np.full(shape, float(value)), requires_grad=True)


class Embedding:
    """Lookup table of row vectors, optionally frozen."""

    def __init__(self, count, dim, rng=None, init_std=0.01, matrix=None, trainable=True):
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=np.float64)
            if matrix.shape != (count, dim):
                raise DimensionError(f"embedding matrix {matrix.shape} does not match ({count}, {dim})")
            self.table = Tensor(matrix.copy(), requires_grad=trainable)
        else:
            self.table = gaussian(rng, (count, dim), init_std)
            self.table.requires_grad = trainable

    @property
    def dim(self):
        return self.table.shape[1]

    def __call__(self, ids):
        return embedding_lookup(self.table, ids)

    def parameters(self):
        yield "table", self.table


class Highway:
    """Stack of gated layers: y = g * relu(W_t x + b_t) + (1 - g) * x."""

    def __init__(self, width, num_layers, rng, init_std=0.01, gate_bias=1.0):
        self.width = width
        self.layers = []
        for _ in range(num_layers):
            self.layers.append({
                "transform_w": gaussian(rng, (width, width), init_std),
                "transform_b": _bias(width),
                "gate_w": gaussian(rng, (width, width), init_std),
                "gate_b": _bias(width, gate_bias),
            })

    def __call__(self, x):
        if x.shape[-1] != self.width:
            raise DimensionError(f"highway width {self.width} cannot take input of shape {x.shape}")
        for layer in self.layers:
            gate = sigmoid(add(matmul(x, layer["gate_w"]), layer["gate_b"]))
            candidate = relu(add(matmul(x, layer["transform_w"]), layer["transform_b"]))
            x = gate * candidate + (1.0 - gate) * x
        return x

    def parameters(self):
        for i, layer in enumerate(self.layers):
            for key, value in layer.items():
                yield f"l{i}.{key}", value


class GruCell:
    """Gated recurrent unit: h' = z*h + (1-z)*tanh(W_c x + U_c (r*h) + b_c)."""

    def __init__(self, input_size, state_size, rng, init_std=0.01):
        self.input_size = input_size
        self.state_size = state_size
        self.params = {}
        for gate in ("update", "reset", "candidate"):
            self.params[f"w_{gate}"] = gaussian(rng, (input_size, state_size), init_std)
            self.params[f"u_{gate}"] = gaussian(rng, (state_size, state_size), init_std)
            self.params[f"b_{gate}"] = _bias(state_size)

    def step(self, x, state):
        p = self.params
        if x.shape[-1] != self.input_size or state.shape[-1] != self.state_size:
            raise DimensionError(
                f"gru cell ({self.input_size} -> {self.state_size}) cannot take "
                f"input {x.shape} with state {state.shape}")
        z = sigmoid(add(add(matmul(x, p["w_update"]), matmul(state, p["u_update"])), p["b_update"]))
        r = sigmoid(add(add(matmul(x, p["w_reset"]), matmul(state, p["u_reset"])), p["b_reset"]))
        candidate = tanh(add(add(matmul(x, p["w_candidate"]), matmul(r * state, p["u_candidate"])), p["b_candidate"]))
        return z * state + (1.0 - z) * candidate

    def parameters(self):
        yield from self.params.items()


class LstmCell:
    """One LSTM direction with fused gate matrices, order [input, forget, cell, output]."""

    def __init__(self, input_size, hidden_size, rng, init_std=0.01, forget_bias=1.0):
        self.hidden_size = hidden_size
        self.w_x = gaussian(rng, (input_size, 4 * hidden_size), init_std)
        self.w_h = gaussian(rng, (hidden_size, 4 * hidden_size), init_std)
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size:2 * hidden_size] = forget_bias
        self.bias = Tensor(bias, requires_grad=True)

    def step(self, x, h, c):
        n = self.hidden_size
        z = add(add(matmul(x, self.w_x), matmul(h, self.w_h)), self.bias)
        axis = z.ndim - 1
        i = sigmoid(narrow(z, axis, 0, n))
        f = sigmoid(narrow(z, axis, n, n))
        g = tanh(narrow(z, axis, 2 * n, n))
        o = sigmoid(narrow(z, axis, 3 * n, n))
        c_new = f * c + i * g
        h_new = o * tanh(c_new)
        return h_new, c_new

    def parameters(self):
        yield "w_x", self.w_x
        yield "w_h", self.w_h
        yield "bias", self.bias


@dataclass
class BiLstmOutput:
    """Per-layer position outputs (lists of (B, hidden) tensors) and final cell states."""

    outputs: list  # outputs[layer][position] -> Tensor (B, hidden)
    final_cells: list  # final_cells[layer] -> Tensor (B, hidden)


class BiLstm:
    """Stacked bidirectional LSTM over right-padded batches.

    Positions at or beyond a sequence's length produce exactly zero output
    and leave that sequence's carried state untouched, so final states always
    reflect the true last timestep.
    """

    def __init__(self, input_size, hidden_size, num_layers, rng, init_std=0.01,
                 inter_layer_dropout=0.0):
        if hidden_size % 2 != 0:
            raise DimensionError(f"bidirectional hidden size must be even, got {hidden_size}")
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.inter_layer_dropout = inter_layer_dropout
        half = hidden_size // 2
        self.directions = []
        for layer in range(num_layers):
            width = input_size if layer == 0 else hidden_size
            self.directions.append((
                LstmCell(width, half, rng, init_std),
                LstmCell(width, half, rng, init_std),
            ))

    @property
    def num_layers(self):
        return len(self.directions)

    def forward_batch(self, xs, lengths, train=False, rng=None):
        """Run over a batch given per-position input matrices.

        xs: list over positions of (B, input_size) tensors.
        lengths: int array of true sequence lengths, all in [1, len(xs)].
        """
        n_pos = len(xs)
        if n_pos == 0:
            raise EmptyInputError("bilstm over an empty sequence")
        lengths = np.asarray(lengths, dtype=np.int64)
        if (lengths <= 0).any():
            raise EmptyInputError("bilstm batch contains a zero-length sequence")
        if (lengths > n_pos).any():
            raise DimensionError(f"length exceeds the {n_pos} provided positions")
        batch = xs[0].shape[0]
        half = self.hidden_size // 2

        keep_masks, drop_masks, full = [], [], []
        for t in range(n_pos):
            active = lengths > t
            full.append(bool(active.all()))
            m = np.repeat(active.astype(np.float64)[:, None], half, axis=1)
            keep_masks.append(Tensor(m))
            drop_masks.append(Tensor(1.0 - m))

        layer_inputs = xs
        outputs, final_cells = [], []
        for layer_idx, (fw, bw) in enumerate(self.directions):
            if layer_idx > 0 and train and self.inter_layer_dropout > 0:
                layer_inputs = [dropout(x, self.inter_layer_dropout, True, rng) for x in layer_inputs]

            fw_out = self._run_direction(fw, layer_inputs, range(n_pos), keep_masks, drop_masks, full, batch, half)
            bw_out = self._run_direction(bw, layer_inputs, range(n_pos - 1, -1, -1), keep_masks, drop_masks, full, batch, half)

            outs = [concat([fw_out[0][t], bw_out[0][t]], axis=1) for t in range(n_pos)]
            outputs.append(outs)
            final_cells.append(concat([fw_out[1], bw_out[1]], axis=1))
            layer_inputs = outs
        return BiLstmOutput(outputs, final_cells)

    @staticmethod
    def _run_direction(cell, xs, order, keep, drop, full, batch, half):
        h = Tensor(np.zeros((batch, half)))
        c = Tensor(np.zeros((batch, half)))
        outs = [None] * len(xs)
        for t in order:
            h_new, c_new = cell.step(xs[t], h, c)
            if full[t]:
                h, c = h_new, c_new
                outs[t] = h_new
            else:
                outs[t] = keep[t] * h_new
                h = keep[t] * h_new + drop[t] * h
                c = keep[t] * c_new + drop[t] * c
        return outs, c

    def forward_sequence(self, embeddings, length=None, train=False, rng=None):
        """Single right-padded sequence given as an (N, input_size) matrix.

        Returns per-layer (N, hidden) output matrices and per-layer final
        cell-state vectors.
        """
        if embeddings.ndim != 2:
            raise DimensionError(f"expected an (N, {self.input_size}) matrix, got {embeddings.shape}")
        n = embeddings.shape[0]
        if n == 0:
            raise EmptyInputError("bilstm over an empty sequence")
        xs = [narrow(embeddings, 0, t, 1) for t in range(n)]
        result = self.forward_batch(xs, np.array([n if length is None else length]), train, rng)
        per_layer = [concat(layer_outs, axis=0) for layer_outs in result.outputs]
        finals = [reshape(fc, (self.hidden_size,)) for fc in result.final_cells]
        return per_layer, finals

    def parameters(self):
        for i, (fw, bw) in enumerate(self.directions):
            for key, value in fw.parameters():
                yield f"l{i}.fw.{key}", value
            for key, value in bw.parameters():
                yield f"l{i}.bw.{key}", value


class MaxoutNetwork:
    """Two maxout layers then an affine map to class logits.

    Each maxout unit takes the max over ``pool`` affine outputs. Dropout,
    when configured, hits the input and the activations between layers.
    """

    def __init__(self, input_size, num_classes, rng, width=200, pool=4,
                 num_layers=2, init_std=0.01, drop_rate=0.0):
        self.input_size = input_size
        self.pool = pool
        self.drop_rate = drop_rate
        self.hidden = []
        prev = input_size
        for _ in range(num_layers):
            self.hidden.append((gaussian(rng, (prev, width * pool), init_std), _bias(width * pool)))
            prev = width
        self.output = (gaussian(rng, (prev, num_classes), init_std), _bias(num_classes))

    def __call__(self, x, train=False, rng=None):
        vector = x.ndim == 1
        h = reshape(x, (1, x.shape[0])) if vector else x
        if h.shape[1] != self.input_size:
            raise DimensionError(f"maxout expects width {self.input_size}, got {h.shape}")
        for w, b in self.hidden:
            h = dropout(h, self.drop_rate, train, rng)
            h = max_pool_cols(add(matmul(h, w), b), self.pool)
        w, b = self.output
        logits = add(matmul(h, w), b)
        return reshape(logits, (logits.shape[1],)) if vector else logits

    def parameters(self):
        for i, (w, b) in enumerate(self.hidden):
            yield f"l{i}.w", w
            yield f"l{i}.b", b
        yield "out.w", self.output[0]
        yield "out.b", self.output[1]


# ---------------------------------------------------------------------------
# parameter manifest (JSON; float64 values round-trip bit-exactly via repr)


def manifest_dump(params, path):
    """Write {path: {shape, data}} with row-major float64 values."""
    payload = {
        name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
        for name, t in params.items()
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def manifest_load(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    out = {}
    for name, entry in payload.items():
        out[name] = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
    return out


def manifest_assign(params, arrays):
    """Copy loaded arrays into live parameters, checking names and shapes."""
    missing = set(params) - set(arrays)
    extra = set(arrays) - set(params)
    if missing or extra:
        raise DimensionError(f"manifest mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name, tensor in params.items():
        value = arrays[name]
        if tuple(value.shape) != tuple(tensor.shape):
            raise DimensionError(f"parameter {name}: manifest shape {value.shape} vs model {tensor.shape}")
        tensor.data[...] = value
