"""Command-line surface: prepare, stats, synth, train, experiment, evaluate, predict."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import RunConfig, load_run_config
from .data import (Example, SplitSpec, corpus_stats, generate_synthetic, load_jsonl,
                   save_jsonl, stratified_split)
from .encoder import load_precomputed
from .errors import ConfigurationError, TinyAbsaError, ValidationError
from .evaluation import evaluate_model
from .experiment import run_experiment
from .model import load_model, predict_label
from .tokenizer import Vocab, build_vocab
from .training import run_training

CONFIG_ENV_VAR = "TINYABSA_CONFIG"


def _config_path(args) -> str | None:
    if args.config is not None:
        return args.config
    return os.environ.get(CONFIG_ENV_VAR)


def _load_config(args) -> RunConfig:
    path = _config_path(args)
    if path is None and not args.set:
        raise ConfigurationError(
            f"no config given: pass --config or set ${CONFIG_ENV_VAR}")
    return load_run_config(path, args.set)


def _require(value, name: str):
    if value is None:
        raise ConfigurationError(f"config is missing {name}")
    return value


def cmd_prepare(args) -> int:
    examples = load_jsonl(args.data)
    spec = SplitSpec(train=args.train_frac, val=args.val_frac, test=args.test_frac,
                     seed=args.seed)
    train, val, test = stratified_split(examples, spec)
    os.makedirs(args.out, exist_ok=True)
    save_jsonl(os.path.join(args.out, "train.jsonl"), train)
    save_jsonl(os.path.join(args.out, "val.jsonl"), val)
    save_jsonl(os.path.join(args.out, "test.jsonl"), test)
    vocab = build_vocab((ex.text for ex in train), min_freq=args.min_freq)
    vocab.save(os.path.join(args.out, "vocab.txt"))
    print(f"wrote {len(train)}/{len(val)}/{len(test)} examples and a "
          f"{vocab.size}-token vocab to {args.out}")
    return 0


def cmd_stats(args) -> int:
    report = corpus_stats(load_jsonl(args.data), bin_width=args.bin_width)
    print(report.to_json() if args.json else report.render())
    return 0


def cmd_synth(args) -> int:
    examples = generate_synthetic(args.n, vocab_size=args.vocab_size, seed=args.seed)
    save_jsonl(args.out, examples)
    print(f"wrote {len(examples)} synthetic examples to {args.out}")
    return 0


def _load_precomputed_for(cfg: RunConfig, which: str, expected_dim: int | None = None):
    path = getattr(cfg, f"embeddings_{which}")
    if path is None:
        raise ConfigurationError(f"[encoder] embeddings_{which} is required "
                                 "when preset = precomputed")
    if expected_dim is None:
        from .checkpoint import load_tensors

        for arr in load_tensors(path).values():
            if arr.ndim == 2:
                expected_dim = int(arr.shape[1])
                break
        else:
            raise ConfigurationError(f"{path} holds no 2-D embedding tensors")
    return load_precomputed(path, expected_dim=expected_dim)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    train_examples = load_jsonl(_require(cfg.data_train, "[data] train"))
    val_examples = load_jsonl(_require(cfg.data_val, "[data] val"))
    vocab = None
    precomputed = None
    if cfg.encoder_preset == "precomputed":
        train_emb = _load_precomputed_for(cfg, "train")
        precomputed = (train_emb, _load_precomputed_for(cfg, "val", train_emb.dim))
    else:
        vocab = Vocab.load(_require(cfg.vocab_path, "[paths] vocab"))
    out_dir = args.out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    model, history = run_training(cfg.train, train_examples, val_examples, vocab,
                                  head_overrides=cfg.head_overrides,
                                  precomputed=precomputed, log=print)
    from .model import save_model

    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt")
    save_model(model, ckpt_path)
    history.save(os.path.join(out_dir, "history.json"))
    print(f"stopped: {history.stop_reason} (best epoch {history.best_epoch}); "
          f"checkpoint at {ckpt_path}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    train_examples = load_jsonl(_require(cfg.data_train, "[data] train"))
    val_examples = load_jsonl(_require(cfg.data_val, "[data] val"))
    test_examples = load_jsonl(_require(cfg.data_test, "[data] test"))
    vocab = None
    precomputed = None
    if cfg.grid_encoders == ["precomputed"]:
        train_emb = _load_precomputed_for(cfg, "train")
        precomputed = (train_emb,
                       _load_precomputed_for(cfg, "val", train_emb.dim),
                       _load_precomputed_for(cfg, "test", train_emb.dim))
    else:
        vocab = Vocab.load(_require(cfg.vocab_path, "[paths] vocab"))
    out_dir = args.out_dir or cfg.out_dir
    report = run_experiment(cfg.train, cfg.grid_heads, cfg.grid_encoders, cfg.grid_seeds,
                            train_examples, val_examples, test_examples, vocab, out_dir,
                            head_overrides=cfg.head_overrides,
                            precomputed=precomputed,
                            save_checkpoints=cfg.save_checkpoints,
                            log=print,
                            epoch_log=print if args.verbose else None)
    from .evaluation import render_report

    print(render_report(report), end="")
    print(f"report files in {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.checkpoint)
    examples = load_jsonl(args.data)
    embeddings = None
    if model.uses_precomputed:
        if args.embeddings is None:
            raise ConfigurationError("--embeddings is required for a precomputed-encoder "
                                     "checkpoint")
        embeddings = load_precomputed(args.embeddings, model.precomputed_dim)
    result = evaluate_model(model, examples, embeddings=embeddings)
    if args.json:
        print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    else:
        print(f"accuracy    {result.accuracy:.4f}")
        print(f"macro F1    {result.macro_f1:.4f}")
        print(f"micro F1    {result.micro_f1:.4f}")
        print(f"weighted F1 {result.weighted_f1:.4f}")
        print(f"loss        {result.loss:.4f}")
        print("confusion (rows gold, cols predicted):")
        for row in result.confusion:
            print("  " + " ".join(f"{c:6d}" for c in row))
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.checkpoint)
    text = args.text
    if args.aspect_start is not None and args.aspect_end is not None:
        start, end = args.aspect_start, args.aspect_end
        aspect = text[start:end]
    elif args.aspect is not None:
        start = text.find(args.aspect)
        if start < 0:
            raise ValidationError(f"aspect {args.aspect!r} does not occur in the text")
        end = start + len(args.aspect)
        aspect = args.aspect
    else:
        raise ConfigurationError("pass --aspect or both --aspect-start and --aspect-end")
    example = Example(text=text, aspect=aspect, aspect_start=start, aspect_end=end,
                      label=1).validate("prediction input")
    label, probs = predict_label(model, example)
    doc = {"label": label,
           "probabilities": {name: float(p) for name, p in
                             zip(("negative", "neutral", "positive"), probs)}}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tinyabsa",
        description="Desk-scale aspect-based sentiment analysis: data preparation, "
                    "training, grid experiments, evaluation, and prediction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate, split, and build a vocabulary")
    p.add_argument("--data", required=True, help="input JSONL corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train-frac", type=float, default=0.70)
    p.add_argument("--val-frac", type=float, default=0.15)
    p.add_argument("--test-frac", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-freq", type=int, default=1, help="vocab frequency threshold")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("stats", help="corpus statistics report")
    p.add_argument("--data", required=True)
    p.add_argument("--bin-width", type=int, default=10, help="token-length histogram bin")
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic cue-word corpus")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    for name, help_text in (("train", "train one model from a config file"),
                            ("experiment", "run a heads × encoders × seeds grid")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help=f"INI config (default ${CONFIG_ENV_VAR})")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value; repeatable, wins over the file")
        p.add_argument("--out-dir", help="override [paths] out_dir")
        if name == "experiment":
            p.add_argument("--verbose", action="store_true", help="print per-epoch lines")
            p.set_defaults(func=cmd_experiment)
        else:
            p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on a labeled set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", help="embedding container for precomputed models")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify one (text, aspect) pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--aspect", help="aspect phrase (first occurrence in the text)")
    p.add_argument("--aspect-start", type=int, help="aspect start character offset")
    p.add_argument("--aspect-end", type=int, help="aspect end character offset (exclusive)")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TinyAbsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
