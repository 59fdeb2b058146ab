"""Full classifier: encoder, iterative attention, maxout head, and the loss.

Only the summary from the final attention iteration reaches the
classifier; intermediate summaries influence the output solely through
the attention loop. The loss is the batch-mean cross entropy plus the
batch-mean attention penalty (the penalty already carries its strength
factor).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .attention import AttentionParams, IramConfig, attention_penalty, iterate
from .data import DataError, NgramInventory, Vocabulary
from .encoders import FullEncoder, VanillaEncoder
from .layers import MaxoutNetwork, manifest_assign, manifest_dump, manifest_load
from .tensor import (
    add,
    backward,  # noqa: F401  (re-exported for callers driving training by hand)
    log_softmax_rows,
    neg,
    no_grad,
    pick_rows,
    scale,
    stack_rows,
    tensor_mean,
)

__all__ = ["ModelConfig", "ForwardResult", "IramModel", "IncompatibleCheckpointError",
           "save_checkpoint", "load_checkpoint"]


class IncompatibleCheckpointError(RuntimeError):
    """Checkpoint contents do not fit the requested configuration."""


@dataclass
class ModelConfig:
    """Architecture and regularization settings for one model instance."""

    encoder: str = "vanilla"          # vanilla | full
    iterations: int = 3
    gamma: float = 0.0003
    hidden_size: int = 64
    embed_dim: int = 300
    char_dim: int = 100
    ctx_layers: int = 2
    query_layers: int = 1
    num_classes: int = 2
    embedding_dropout: float = 0.1
    recurrent_dropout: float = 0.0
    classifier_dropout: float = 0.0
    maxout_width: int = 200
    maxout_pool: int = 4
    use_char_ngrams: bool = True
    use_embedding_finetune: bool = True
    use_query_finetune: bool = True
    trainable_embeddings: bool = True
    init_std: float = 0.01

    def __post_init__(self):
        if self.encoder not in ("vanilla", "full"):
            raise ValueError(f"unknown encoder variant {self.encoder!r}")
        for name in ("iterations", "hidden_size", "embed_dim", "char_dim",
                     "num_classes", "maxout_width", "maxout_pool", "ctx_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.query_layers < 0:
            raise ValueError(f"query_layers must be nonnegative, got {self.query_layers}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.hidden_size % 2 != 0:
            raise ValueError(f"hidden_size must be even, got {self.hidden_size}")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, payload):
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise DataError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**payload)


@dataclass
class ForwardResult:
    logits: object            # Tensor (B, num_classes)
    traces: list              # per-sequence AttentionTrace
    total: object             # scalar Tensor, cross_entropy + penalty
    cross_entropy: object
    penalty: object


class IramModel:
    def __init__(self, config, vocab_size, rng, ngram_count=0, ngram_ids=None,
                 word_matrix=None, char_matrix=None):
        self.config = config
        self.attention_config = IramConfig(config.iterations, config.gamma)
        if config.encoder == "vanilla":
            self.encoder = VanillaEncoder(
                vocab_size, config.hidden_size, rng,
                embed_dim=config.embed_dim, init_std=config.init_std,
                embedding_dropout=config.embedding_dropout,
                trainable_embeddings=config.trainable_embeddings,
                word_matrix=word_matrix)
        else:
            self.encoder = FullEncoder(
                vocab_size, config.hidden_size, rng,
                embed_dim=config.embed_dim, char_dim=config.char_dim,
                ngram_count=ngram_count, ngram_ids=ngram_ids,
                ctx_layers=config.ctx_layers, query_layers=config.query_layers,
                init_std=config.init_std,
                embedding_dropout=config.embedding_dropout,
                recurrent_dropout=config.recurrent_dropout,
                use_char_ngrams=config.use_char_ngrams,
                use_embedding_finetune=config.use_embedding_finetune,
                use_query_finetune=config.use_query_finetune,
                trainable_embeddings=config.trainable_embeddings,
                word_matrix=word_matrix, char_matrix=char_matrix)
        self.attention = AttentionParams(config.hidden_size, config.hidden_size,
                                         rng, config.init_std)
        self.classifier = MaxoutNetwork(
            config.hidden_size, config.num_classes, rng,
            width=config.maxout_width, pool=config.maxout_pool,
            init_std=config.init_std, drop_rate=config.classifier_dropout)

    # -- forward -----------------------------------------------------------

    def _encode(self, batch, train, rng):
        if isinstance(self.encoder, FullEncoder):
            return self.encoder.encode_batch(batch.ids, batch.lengths, batch.tokens, train, rng)
        return self.encoder.encode_batch(batch.ids, batch.lengths, train, rng)

    def forward(self, batch, train=False, rng=None):
        labels = np.asarray(batch.labels, dtype=np.int64)
        if labels.min(initial=0) < 0 or labels.max(initial=-1) >= self.config.num_classes:
            raise DataError(f"label outside [0, {self.config.num_classes})")

        encoded = self._encode(batch, train, rng)
        traces = []
        penalty_sum = None
        for out in encoded:
            trace = iterate(out.hidden_states, out.query, self.attention, self.attention_config)
            traces.append(trace)
            pen = attention_penalty(trace, self.attention_config)
            penalty_sum = pen if penalty_sum is None else add(penalty_sum, pen)
        penalty = scale(penalty_sum, 1.0 / len(encoded))

        final_summaries = stack_rows([trace.summaries[-1] for trace in traces])
        logits = self.classifier(final_summaries, train, rng)
        log_probs = log_softmax_rows(logits)
        cross_entropy = neg(tensor_mean(pick_rows(log_probs, labels)))
        total = add(cross_entropy, penalty)
        return ForwardResult(logits, traces, total, cross_entropy, penalty)

    def predict(self, batch):
        """Most likely class per sequence; ties resolve to the lower index."""
        with no_grad():
            result = self.forward(batch, train=False)
        return np.argmax(result.logits.data, axis=1)

    def trace_sentence(self, ids, tokens=None):
        """Attention trace for a single sequence in evaluation mode."""
        with no_grad():
            if isinstance(self.encoder, FullEncoder):
                out = self.encoder.encode(ids, tokens)
            else:
                out = self.encoder.encode(ids)
            return iterate(out.hidden_states, out.query, self.attention, self.attention_config)

    # -- parameters ----------------------------------------------------------

    def parameters(self):
        params = {}
        for key, value in self.encoder.parameters():
            params[f"encoder.{key}"] = value
        for key, value in self.attention.parameters():
            params[f"attention.{key}"] = value
        for key, value in self.classifier.parameters():
            params[f"classifier.{key}"] = value
        return params

    def trainable_parameters(self):
        return {k: v for k, v in self.parameters().items() if v.requires_grad}


# ---------------------------------------------------------------------------
# checkpoints: config + parameter manifest + vocabularies in one directory


def save_checkpoint(directory, model, vocab, inventory=None, optimizer=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.json").write_text(json.dumps(model.config.to_json(), indent=2), encoding="utf-8")
    manifest_dump(model.parameters(), directory / "params.json")
    (directory / "vocab.json").write_text(json.dumps(vocab.to_json()), encoding="utf-8")
    if inventory is not None:
        (directory / "ngrams.json").write_text(json.dumps(inventory.to_json()), encoding="utf-8")
    if optimizer is not None:
        (directory / "optim.json").write_text(json.dumps(optimizer.state_to_json()), encoding="utf-8")


def load_checkpoint(directory):
    """Rebuild (model, vocab, inventory) from a checkpoint directory."""
    directory = Path(directory)
    config = ModelConfig.from_json(json.loads((directory / "config.json").read_text(encoding="utf-8")))
    vocab = Vocabulary.from_json(json.loads((directory / "vocab.json").read_text(encoding="utf-8")))
    inventory = None
    ngram_path = directory / "ngrams.json"
    if ngram_path.exists():
        inventory = NgramInventory.from_json(json.loads(ngram_path.read_text(encoding="utf-8")))
    model = IramModel(
        config, len(vocab), np.random.default_rng(0),
        ngram_count=len(inventory) if inventory else 0,
        ngram_ids=inventory.ids_of if inventory else None)
    try:
        manifest_assign(model.parameters(), manifest_load(directory / "params.json"))
    except ValueError as exc:
        raise IncompatibleCheckpointError(str(exc)) from exc
    return model, vocab, inventory
