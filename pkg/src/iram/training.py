"""Training loop, run configuration, and per-epoch metrics.

A run is fully described by a RunConfig (JSON file plus command-line
overrides) and is reproducible from its seed: parameter initialization,
batch shuffling, dropout draws, and synthetic data generation each use a
stream derived from it. Metrics are appended as line-delimited JSON and
the best-validation checkpoint is kept.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import data as datamod
from .data import (
    DataError,
    NgramInventory,
    Vocabulary,
    batch_examples,
    default_grammar,
    generate_synthetic,
)
from .model import IramModel, ModelConfig, save_checkpoint
from .optim import AmsGrad
from .tensor import backward, no_grad

__all__ = ["ConfigError", "RunConfig", "EpochRecord", "TrainResult",
           "train_step", "evaluate", "fit", "load_dataset", "run_training"]


class ConfigError(ValueError):
    """Run configuration contains unknown or invalid entries."""


_MODEL_FIELDS = {f.name for f in fields(ModelConfig)}


@dataclass
class RunConfig:
    """Everything one training run needs, model and optimizer included."""

    # data / run plumbing
    dataset: str = "synthetic"        # synthetic | sst2 | sst5 | imdb
    seed: int = 1234
    out_dir: str = "runs/latest"
    epochs: int = 20
    batch_size: int = 32
    data_dir: str = ""                # falls back to $IRAM_DATA_DIR
    train_size: int = 2000            # synthetic dataset sizes
    val_size: int = 500
    test_size: int = 500
    # optimizer
    alpha: float = 0.0003
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    weight_decay: float = 0.00003
    # model
    encoder: str = "vanilla"
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

    @classmethod
    def from_dict(cls, payload):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigError(f"unknown run config keys: {unknown}")
        return cls(**payload)

    @classmethod
    def from_file(cls, path, overrides=None):
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        if overrides:
            payload.update(overrides)
        return cls.from_dict(payload)

    def to_json(self):
        return asdict(self)

    def model_config(self):
        payload = {k: v for k, v in asdict(self).items() if k in _MODEL_FIELDS}
        if self.dataset == "sst5":
            payload["num_classes"] = 5
        return ModelConfig(**payload)

    def resolved_data_dir(self):
        root = self.data_dir or os.environ.get("IRAM_DATA_DIR", "")
        if not root:
            raise ConfigError("set data_dir or the IRAM_DATA_DIR environment variable")
        return Path(root)


@dataclass
class EpochRecord:
    epoch: int
    split: str
    loss: float
    ce: float
    penalty: float
    accuracy: float

    def to_json(self):
        return asdict(self)


@dataclass
class TrainResult:
    best_accuracy: float
    best_epoch: int
    history: list
    checkpoint_dir: str = ""
    metrics_path: str = ""


def train_step(model, optimizer, batch, rng):
    """One optimizer update; returns the forward result for logging."""
    optimizer.zero_grad()
    result = model.forward(batch, train=True, rng=rng)
    backward(result.total)
    optimizer.clip()
    optimizer.step()
    return result


def evaluate(model, batches):
    """Accuracy and mean losses over batches, without recording gradients."""
    total = correct = 0
    loss_sum = ce_sum = pen_sum = 0.0
    for batch in batches:
        with no_grad():
            result = model.forward(batch, train=False)
        predictions = np.argmax(result.logits.data, axis=1)
        correct += int((predictions == batch.labels).sum())
        total += len(batch)
        loss_sum += result.total.item() * len(batch)
        ce_sum += result.cross_entropy.item() * len(batch)
        pen_sum += result.penalty.item() * len(batch)
    return {
        "accuracy": correct / total,
        "loss": loss_sum / total,
        "ce": ce_sum / total,
        "penalty": pen_sum / total,
    }


def fit(model, optimizer, train_examples, vocab, epochs, batch_size, seed,
        eval_splits=None, on_record=None, on_best=None,
        stop_split=None, stop_accuracy=None):
    """Run the training loop; returns per-epoch records for every split.

    ``on_best`` fires whenever the first split in ``eval_splits`` reaches a
    new best accuracy. ``stop_split``/``stop_accuracy`` stop early once a
    split reaches the target.
    """
    eval_splits = eval_splits or {}
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    drop_rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    history = []
    best_accuracy, best_epoch = -1.0, 0
    tracked = next(iter(eval_splits), None)

    for epoch in range(1, epochs + 1):
        batches = batch_examples(train_examples, vocab, batch_size, rng=shuffle_rng)
        for batch in batches:
            train_step(model, optimizer, batch, drop_rng)

        stop = False
        for split_name, examples in eval_splits.items():
            stats = evaluate(model, batch_examples(examples, vocab, batch_size))
            record = EpochRecord(epoch, split_name, stats["loss"], stats["ce"],
                                 stats["penalty"], stats["accuracy"])
            history.append(record)
            if on_record:
                on_record(record)
            if split_name == tracked and stats["accuracy"] > best_accuracy:
                best_accuracy, best_epoch = stats["accuracy"], epoch
                if on_best:
                    on_best(epoch, stats["accuracy"])
            if split_name == stop_split and stats["accuracy"] >= stop_accuracy:
                stop = True
        if stop:
            break
    return TrainResult(best_accuracy, best_epoch, history)


def load_dataset(config):
    """(train, val, test) example lists for the configured dataset."""
    name = config.dataset
    if name == "synthetic":
        return (
            generate_synthetic(default_grammar(config.seed), config.train_size),
            generate_synthetic(default_grammar(config.seed + 1), config.val_size),
            generate_synthetic(default_grammar(config.seed + 2), config.test_size),
        )
    root = config.resolved_data_dir()
    if name in ("sst2", "sst5"):
        binary = name == "sst2"
        folder = root / "sst"
        return (
            datamod.load_sst(folder / "train.txt", binary=binary),
            datamod.load_sst(folder / "dev.txt", binary=binary),
            datamod.load_sst(folder / "test.txt", binary=binary),
        )
    if name == "imdb":
        full = datamod.load_imdb(root / "imdb" / "train")
        train, val = datamod.split_validation(full, 0.1, config.seed)
        test = datamod.load_imdb(root / "imdb" / "test")
        return train, val, test
    raise ConfigError(f"unknown dataset {name!r}")


def build_model(config, train_examples):
    """Model plus the vocabularies it was built against."""
    vocab = Vocabulary.from_corpus(train_examples)
    model_config = config.model_config()
    inventory = None
    ngram_count = 0
    ngram_ids = None
    if model_config.encoder == "full" and model_config.use_char_ngrams:
        inventory = NgramInventory.from_corpus(train_examples)
        ngram_count = len(inventory)
        ngram_ids = inventory.ids_of
    init_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    model = IramModel(model_config, len(vocab), init_rng,
                      ngram_count=ngram_count, ngram_ids=ngram_ids)
    return model, vocab, inventory


def run_training(config):
    """Full training command: data, model, loop, metrics file, best checkpoint."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_config.json").write_text(
        json.dumps(config.to_json(), indent=2), encoding="utf-8")

    train, val, test = load_dataset(config)
    for ex in train:
        if ex.label >= config.model_config().num_classes:
            raise DataError(f"label {ex.label} outside the configured class count")
    model, vocab, inventory = build_model(config, train)
    optimizer = AmsGrad(model.trainable_parameters(), alpha=config.alpha,
                        beta1=config.beta1, beta2=config.beta2, eps=config.eps,
                        weight_decay=config.weight_decay, clip_norm=config.clip_norm)

    metrics_path = out_dir / "metrics.jsonl"
    checkpoint_dir = out_dir / "best"
    with open(metrics_path, "w", encoding="utf-8") as metrics_file:
        def on_record(record):
            metrics_file.write(json.dumps(record.to_json()) + "\n")
            metrics_file.flush()

        def on_best(epoch, accuracy):
            save_checkpoint(checkpoint_dir, model, vocab, inventory, optimizer)

        result = fit(model, optimizer, train, vocab, config.epochs, config.batch_size,
                     config.seed, eval_splits={"val": val, "train": train},
                     on_record=on_record, on_best=on_best)
    result.checkpoint_dir = str(checkpoint_dir)
    result.metrics_path = str(metrics_path)
    return result
