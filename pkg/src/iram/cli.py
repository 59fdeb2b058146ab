"""Command-line entry points: train, eval, trace, generate-synthetic."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import DataError, default_grammar, generate_synthetic, write_tsv
from .export import trace_to_csv, trace_to_svg
from .model import IncompatibleCheckpointError, load_checkpoint
from .training import ConfigError, RunConfig, evaluate, load_dataset, run_training
from .data import batch_examples

__all__ = ["main"]


def _add_shared_model_flags(parser):
    parser.add_argument("--config", metavar="PATH", help="JSON run configuration")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--dataset", choices=["sst2", "sst5", "imdb", "synthetic"])
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--iterations", type=int, metavar="T")
    parser.add_argument("--encoder", choices=["vanilla", "full"])
    parser.add_argument("--no-char-ngrams", action="store_true")
    parser.add_argument("--no-query-finetune", action="store_true")
    parser.add_argument("--no-embedding-finetune", action="store_true")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--hidden-size", type=int)
    parser.add_argument("--out", metavar="DIR", help="run output directory")


def _collect_overrides(args):
    overrides = {}
    direct = {
        "seed": args.seed, "dataset": args.dataset, "gamma": args.gamma,
        "iterations": args.iterations, "encoder": args.encoder,
        "epochs": args.epochs, "batch_size": args.batch_size,
        "hidden_size": args.hidden_size, "out_dir": args.out,
    }
    overrides.update({k: v for k, v in direct.items() if v is not None})
    if args.no_char_ngrams:
        overrides["use_char_ngrams"] = False
    if args.no_query_finetune:
        overrides["use_query_finetune"] = False
    if args.no_embedding_finetune:
        overrides["use_embedding_finetune"] = False
    return overrides


def _build_run_config(args):
    overrides = _collect_overrides(args)
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_dict(overrides)


def cmd_train(args):
    config = _build_run_config(args)
    result = run_training(config)
    print(f"best validation accuracy {result.best_accuracy:.4f} at epoch {result.best_epoch}")
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.checkpoint_dir}")
    return 0


_DATASET_CLASSES = {"sst2": 2, "sst5": 5, "imdb": 2, "synthetic": 2}


def cmd_eval(args):
    model, vocab, _ = load_checkpoint(args.checkpoint)
    config = _build_run_config(args)
    dataset_classes = _DATASET_CLASSES[config.dataset]
    if dataset_classes != model.config.num_classes:
        raise IncompatibleCheckpointError(
            f"checkpoint predicts {model.config.num_classes} classes but "
            f"{config.dataset} has {dataset_classes}")
    train, val, test = load_dataset(config)
    split = {"train": train, "val": val, "test": test}[args.split]
    stats = evaluate(model, batch_examples(split, vocab, config.batch_size or 32))
    print(f"{stats['accuracy']:.4f}")
    return 0


def cmd_trace(args):
    model, vocab, _ = load_checkpoint(args.checkpoint)
    tokens = args.sentence.split()
    if not tokens:
        raise DataError("cannot trace an empty sentence")
    trace = model.trace_sentence(vocab.encode(tokens), tokens)
    csv_text = trace_to_csv(trace, tokens)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    if args.svg:
        Path(args.svg).write_text(trace_to_svg(trace, tokens), encoding="utf-8")
    return 0


def cmd_generate_synthetic(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for split, size, offset in (("train", args.train_size, 0),
                                ("val", args.val_size, 1),
                                ("test", args.test_size, 2)):
        grammar = default_grammar((args.seed or 0) + offset)
        write_tsv(generate_synthetic(grammar, size), out / f"{split}.tsv")
    print(f"wrote train/val/test TSV files to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="iram",
        description="iterative recursive attention classifier: training, "
                    "evaluation, and attention-trace export")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train a model and keep the best checkpoint")
    _add_shared_model_flags(train)
    train.set_defaults(handler=cmd_train)

    evaluate_cmd = commands.add_parser("eval", help="accuracy of a checkpoint on a split")
    evaluate_cmd.add_argument("--checkpoint", required=True, metavar="DIR")
    evaluate_cmd.add_argument("--split", choices=["train", "val", "test"], default="test")
    _add_shared_model_flags(evaluate_cmd)
    evaluate_cmd.set_defaults(handler=cmd_eval)

    trace = commands.add_parser("trace", help="export the attention heatmap for a sentence")
    trace.add_argument("--checkpoint", required=True, metavar="DIR")
    trace.add_argument("sentence", help="whitespace-tokenized input sentence")
    trace.add_argument("--out", metavar="CSV", help="write CSV here instead of stdout")
    trace.add_argument("--svg", metavar="SVG", help="also render an SVG heatmap")
    trace.set_defaults(handler=cmd_trace)

    synth = commands.add_parser("generate-synthetic", help="export the synthetic dataset as TSV")
    synth.add_argument("--out", metavar="DIR")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--train-size", type=int, default=2000)
    synth.add_argument("--val-size", type=int, default=500)
    synth.add_argument("--test-size", type=int, default=500)
    synth.set_defaults(handler=cmd_generate_synthetic)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IncompatibleCheckpointError as exc:
        print(f"incompatible checkpoint: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
