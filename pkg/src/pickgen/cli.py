"""Config-driven command line: synth, label, train, restore, evaluate.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every command
writes its artifacts under --out-dir and echoes the effective
configuration there for provenance. A JSON config file provides defaults;
command-line flags override individual keys.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import __version__
from .corpus import (
    LanguageConfig,
    Vocabulary,
    build_vocab,
    load_corpus,
    save_corpus,
)
from .decoding import (
    beam_search,
    default_max_decode_len,
    hypothesis_text,
    load_predictions,
    restore_corpus,
    save_predictions,
)
from .encoding import build_input
from .labeling import (
    EmbeddingTable,
    LabelError,
    label_corpus,
    label_density,
    load_embeddings,
    load_labeled_corpus,
    save_labeled_corpus,
)
from .metrics import evaluate
from .model import load_checkpoint
from .synth import generate_corpus
from .training import TrainConfig, make_model_config, train

DEFAULT_CONFIG: dict = {
    "language": "english",
    "stopword_path": None,
    "seed": 0,
    "vocab_size": 2000,
    "max_input_len": 512,
    "embeddings": None,
    "embedding_fallback": "hash",
    "label_mode": "hard",
    "model": {
        "d_model": 64,
        "num_layers": 2,
        "num_heads": 4,
        "ffn_dim": 128,
        "picker_hidden": [64, 32, 16],
        "rel_pos_buckets": 32,
        "rel_pos_max_distance": 128,
        "dropout": 0.1,
        "literal_pe": False,
        "max_positions": 512,
    },
    "train": {
        "picker_weight": 1.0,
        "learning_rate": 5e-5,
        "beta1": 0.9,
        "beta2": 0.999,
        "weight_decay": 0.01,
        "batch_size": 12,
        "epochs": None,
        "subsample_fraction": 1.0,
        "checkpoint_every": 0,
        "grad_clip": 1.0,
    },
    "inference": {
        "beam_size": 8,
        "max_len": None,
        "length_penalty": 1.0,
        "nbest": 1,
    },
    "evaluation": {
        "pickup_mode": "any",
        "bucket_bleu_n": 2,
    },
}

# Corpora below this size (and any subsampled run) default to the
# small-corpus epoch count.
SMALL_CORPUS_EPOCHS = 20
LARGE_CORPUS_EPOCHS = 6
LARGE_CORPUS_THRESHOLD = 5000


class UsageError(ValueError):
    """Command-line misuse detected after argument parsing."""


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | None) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
        config = _deep_merge(config, user)
    return config


def _apply_override(config: dict, dotted: str, value) -> None:
    if value is None:
        return
    node = config
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = node[key]
    node[leaf] = value


def _language_config(config: dict) -> LanguageConfig:
    return LanguageConfig.for_language(
        config["language"], stopword_path=config["stopword_path"]
    )


def _write_effective_config(config: dict, command: str, out_dir: str) -> None:
    payload = dict(config)
    payload["command"] = command
    path = os.path.join(out_dir, f"effective-config.{command}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _ensure_out_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)


def _sha256_of(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


def _embedding_table(config: dict) -> EmbeddingTable:
    if config["embeddings"] is not None:
        return load_embeddings(
            config["embeddings"],
            fallback=config["embedding_fallback"],
            seed=config["seed"],
        )
    return EmbeddingTable(fallback=config["embedding_fallback"], seed=config["seed"])


# ---------------------------------------------------------------------------
# Commands

def cmd_synth(args) -> int:
    config = load_config(args.config)
    _apply_override(config, "seed", args.seed)
    templates = None
    if args.templates:
        templates = tuple(int(t) for t in args.templates.split(","))
    _ensure_out_dir(args.out_dir)
    samples = generate_corpus(args.size, config["seed"], templates)
    out_path = os.path.join(args.out_dir, "corpus.jsonl")
    save_corpus(samples, out_path)
    _write_effective_config(config, "synth", args.out_dir)
    print(f"wrote {len(samples)} samples to {out_path}")
    return 0


def cmd_label(args) -> int:
    config = load_config(args.config)
    for dotted, value in (
        ("seed", args.seed),
        ("language", args.language),
        ("stopword_path", args.stopwords),
        ("embeddings", args.embeddings),
        ("embedding_fallback", args.embedding_fallback),
    ):
        _apply_override(config, dotted, value)
    lang = _language_config(config)
    samples = load_corpus(args.corpus)
    missing = [s.id for s in samples if s.reference is None]
    if missing:
        raise LabelError(
            f"cannot label: {len(missing)} samples lack references "
            f"(first: {missing[0]!r})"
        )
    if args.mode == "soft" and config["embeddings"] is None \
            and config["embedding_fallback"] == "zero":
        raise LabelError(
            "soft labeling needs an embeddings file or the hash fallback"
        )
    emb = _embedding_table(config)
    labeled = label_corpus(samples, args.mode, emb, lang)
    _ensure_out_dir(args.out_dir)
    out_path = os.path.join(args.out_dir, "labeled.jsonl")
    save_labeled_corpus(labeled, out_path)
    _write_effective_config(config, "label", args.out_dir)
    density = label_density(labeled)
    total = sum(
        len(row)
        for item in labeled
        for row in (item.labels.tags or item.labels.scores)
    )
    print(f"wrote {len(labeled)} labeled samples to {out_path}")
    print(
        f"label density: {density:.4f} "
        f"({round(density * total)}/{total} context words marked)"
    )
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config)
    for dotted, value in (
        ("seed", args.seed),
        ("language", args.language),
        ("stopword_path", args.stopwords),
        ("label_mode", args.label_mode),
        ("vocab_size", args.vocab_size),
        ("train.picker_weight", args.alpha),
        ("train.learning_rate", args.learning_rate),
        ("train.batch_size", args.batch_size),
        ("train.epochs", args.epochs),
        ("train.subsample_fraction", args.fraction),
        ("train.checkpoint_every", args.checkpoint_every),
    ):
        _apply_override(config, dotted, value)
    lang = _language_config(config)
    label_mode = config["label_mode"]
    if label_mode == "none":
        corpus = load_corpus(args.corpus)
    else:
        corpus = load_labeled_corpus(args.corpus, lang)
    fraction = config["train"]["subsample_fraction"]
    epochs = config["train"]["epochs"]
    if epochs is None:
        epochs = (
            SMALL_CORPUS_EPOCHS
            if len(corpus) < LARGE_CORPUS_THRESHOLD or fraction < 1.0
            else LARGE_CORPUS_EPOCHS
        )
        config["train"]["epochs"] = epochs
    _ensure_out_dir(args.out_dir)
    raw_samples = [
        item.sample if hasattr(item, "sample") else item for item in corpus
    ]
    vocab = build_vocab(raw_samples, config["vocab_size"], lang)
    vocab_path = os.path.join(args.out_dir, "vocab.json")
    vocab.save(vocab_path)
    vocab_sha = _sha256_of(vocab_path)
    model_section = dict(config["model"])
    picker_hidden = tuple(model_section.pop("picker_hidden"))
    model_cfg = make_model_config(
        len(vocab),
        label_mode,
        seed=config["seed"],
        picker_hidden=picker_hidden,
        **model_section,
    )
    train_cfg = TrainConfig(
        label_mode=label_mode,
        seed=config["seed"],
        max_len=config["max_input_len"],
        **{k: v for k, v in config["train"].items() if k != "epochs"},
        epochs=epochs,
    )
    _write_effective_config(config, "train", args.out_dir)
    result = train(
        corpus,
        train_cfg,
        model_cfg,
        vocab,
        lang,
        out_dir=args.out_dir,
        vocab_sha256=vocab_sha,
    )
    losses = result.state.epoch_losses
    print(
        f"trained on {result.trained_samples} of {len(corpus)} samples "
        f"for {epochs} epochs ({result.state.step} steps)"
    )
    print(
        "final epoch losses: picker "
        f"{losses['picker']:.4f}, generator {losses['generator']:.4f}, "
        f"joint {losses['joint']:.4f}"
    )
    if result.state.skipped_steps:
        print(f"warning: skipped {result.state.skipped_steps} non-finite steps")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"loss log: {result.log_path}")
    return 0


def cmd_restore(args) -> int:
    config = load_config(args.config)
    for dotted, value in (
        ("seed", args.seed),
        ("language", args.language),
        ("stopword_path", args.stopwords),
        ("inference.beam_size", args.beam_size),
        ("inference.max_len", args.max_len),
        ("inference.length_penalty", args.length_penalty),
        ("inference.nbest", args.nbest),
    ):
        _apply_override(config, dotted, value)
    lang = _language_config(config)
    samples = load_corpus(args.corpus)
    seen: set[str] = set()
    for sample in samples:
        if sample.id in seen:
            raise UsageError(f"duplicate sample id {sample.id!r} in {args.corpus}")
        seen.add(sample.id)
    params, manifest = load_checkpoint(args.checkpoint)
    vocab_path = args.vocab or os.path.join(
        os.path.dirname(os.path.abspath(args.checkpoint)), "vocab.json"
    )
    vocab = Vocabulary.load(vocab_path)
    recorded = manifest.get("vocab_sha256")
    if recorded is not None and recorded != _sha256_of(vocab_path):
        raise UsageError(
            f"vocabulary {vocab_path} does not match the one the checkpoint "
            f"was trained with"
        )
    inference = config["inference"]
    max_len = inference["max_len"]
    if max_len is None:
        max_len = default_max_decode_len(samples, lang)
        config["inference"]["max_len"] = max_len
    _ensure_out_dir(args.out_dir)
    _write_effective_config(config, "restore", args.out_dir)
    out_path = os.path.join(args.out_dir, "predictions.jsonl")
    if inference["nbest"] > 1:
        _restore_nbest(
            samples, params, vocab, lang, inference, max_len,
            config["max_input_len"], out_path,
        )
    else:
        pairs = restore_corpus(
            samples,
            params,
            vocab,
            lang,
            beam_size=inference["beam_size"],
            max_len=max_len,
            length_penalty=inference["length_penalty"],
            input_max_len=config["max_input_len"],
        )
        save_predictions(pairs, out_path)
    print(f"wrote {len(samples)} predictions to {out_path}")
    return 0


def _restore_nbest(
    samples, params, vocab, lang, inference, max_len, input_max_len, out_path
) -> None:
    with open(out_path, "w", encoding="utf-8") as fh:
        for sample in samples:
            input_ids, _ = build_input(sample, vocab, lang, input_max_len)
            ranked = beam_search(
                params,
                input_ids,
                inference["beam_size"],
                max_len,
                inference["length_penalty"],
                nbest=inference["nbest"],
            )
            texts = [hypothesis_text(hyp, vocab, lang) for hyp in ranked]
            record = {
                "id": sample.id,
                "prediction": texts[0],
                "nbest": [
                    {
                        "prediction": text,
                        "score": hyp.score(inference["length_penalty"]),
                    }
                    for text, hyp in zip(texts, ranked)
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    for dotted, value in (
        ("seed", args.seed),
        ("language", args.language),
        ("stopword_path", args.stopwords),
        ("embeddings", args.embeddings),
        ("evaluation.pickup_mode", args.pickup_mode),
        ("evaluation.bucket_bleu_n", args.bucket_bleu_n),
    ):
        _apply_override(config, dotted, value)
    lang = _language_config(config)
    predictions = load_predictions(args.predictions)
    try:
        labeled = load_labeled_corpus(args.gold, lang)
        gold = [item.sample for item in labeled]
    except LabelError:
        labeled = None
        gold = load_corpus(args.gold)
    report = evaluate(
        predictions,
        gold,
        lang,
        labeled=labeled,
        pickup_mode=config["evaluation"]["pickup_mode"],
        bucket_bleu_n=config["evaluation"]["bucket_bleu_n"],
        emb=_embedding_table(config),
    )
    _ensure_out_dir(args.out_dir)
    _write_effective_config(config, "evaluate", args.out_dir)
    json_path = os.path.join(args.out_dir, "report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    table = report.to_table()
    table_path = os.path.join(args.out_dir, "report.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")
    return 0


# ---------------------------------------------------------------------------
# Parser

def _add_common(parser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out-dir", required=True, help="artifact directory")
    parser.add_argument("--seed", type=int, help="global seed override")
    parser.add_argument("--language", choices=["english", "chinese", "other"])
    parser.add_argument("--stopwords", help="stopword file override")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pickgen", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--size", type=int, default=200)
    p.add_argument("--templates", help="comma-separated template indices")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("label", help="create picker labels from references")
    _add_common(p)
    p.add_argument("--in", dest="corpus", required=True, help="corpus JSONL")
    p.add_argument("--mode", choices=["hard", "soft"], default="hard")
    p.add_argument("--embeddings", help="word-vector text file")
    p.add_argument("--embedding-fallback", choices=["hash", "zero"])
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="joint picker/generator training")
    _add_common(p)
    p.add_argument("--in", dest="corpus", required=True, help="labeled JSONL")
    p.add_argument(
        "--label-mode", choices=["soft", "hard", "defined", "none"]
    )
    p.add_argument("--alpha", type=float, help="picker loss weight")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--fraction", type=float, help="training subsample fraction")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("restore", help="decode restorations for a corpus")
    _add_common(p)
    p.add_argument("--in", dest="corpus", required=True, help="corpus JSONL")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", help="vocabulary JSON (default: beside checkpoint)")
    p.add_argument("--beam-size", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--length-penalty", type=float)
    p.add_argument("--nbest", type=int)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    _add_common(p)
    p.add_argument("--predictions", required=True, help="predictions JSONL")
    p.add_argument("--gold", required=True, help="gold corpus JSONL")
    p.add_argument("--pickup-mode", choices=["any", "all"])
    p.add_argument("--bucket-bleu-n", type=int)
    p.add_argument("--embeddings", help="word vectors for pickup labeling")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse handles --help (code 0) and usage errors (our code 1)
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
