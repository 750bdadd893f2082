"""End-to-end tests for the pickgen command line.

Commands run in-process through main(argv) for speed; one subprocess test
covers the installed console script. Exit codes: 0 success, 1 usage error,
2 runtime error.
"""

import json
import subprocess
import sys

import pytest

from pickgen.cli import main
from pickgen.corpus import save_corpus
from pickgen.synth import generate_corpus

TINY_CONFIG = {
    "vocab_size": 300,
    "model": {
        "d_model": 8,
        "num_layers": 1,
        "num_heads": 2,
        "ffn_dim": 16,
        "picker_hidden": [4],
        "rel_pos_buckets": 8,
        "rel_pos_max_distance": 16,
        "dropout": 0.0,
    },
    "train": {"epochs": 2, "batch_size": 4},
    "inference": {"beam_size": 2},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_CONFIG), encoding="utf-8")
    return str(path)


def run_synth(tmp_path, size=8, seed=0, out="synth"):
    out_dir = tmp_path / out
    code = main([
        "synth", "--out-dir", str(out_dir), "--size", str(size),
        "--seed", str(seed),
    ])
    assert code == 0
    return out_dir / "corpus.jsonl"


def run_label(tmp_path, corpus, mode="hard", out="label"):
    out_dir = tmp_path / out
    code = main([
        "label", "--in", str(corpus), "--out-dir", str(out_dir),
        "--mode", mode,
    ])
    assert code == 0
    return out_dir / "labeled.jsonl"


def run_train(tmp_path, labeled, config, out="train", extra=()):
    out_dir = tmp_path / out
    code = main([
        "train", "--in", str(labeled), "--out-dir", str(out_dir),
        "--config", config, *extra,
    ])
    assert code == 0
    return out_dir


class TestParsing:
    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert capsys.readouterr().out.strip()

    def test_help(self, capsys):
        assert main(["--help"]) == 0
        assert "synth" in capsys.readouterr().out

    def test_no_command(self):
        assert main([]) == 1

    def test_unknown_flag(self, tmp_path):
        assert main(["synth", "--out-dir", str(tmp_path), "--bogus"]) == 1

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required_argument(self, tmp_path):
        assert main(["label", "--out-dir", str(tmp_path)]) == 1


class TestConfig:
    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "config.json"
        cfg.write_text('{"nonsense": 1}', encoding="utf-8")
        code = main([
            "synth", "--out-dir", str(tmp_path / "out"), "--size", "1",
            "--config", str(cfg),
        ])
        assert code == 1
        assert "unknown config keys" in capsys.readouterr().err

    def test_config_must_be_object(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text("[1, 2]", encoding="utf-8")
        code = main([
            "synth", "--out-dir", str(tmp_path / "out"), "--size", "1",
            "--config", str(cfg),
        ])
        assert code == 1

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text('{"seed": 7}', encoding="utf-8")
        out_dir = tmp_path / "out"
        code = main([
            "synth", "--out-dir", str(out_dir), "--size", "2",
            "--config", str(cfg), "--seed", "9",
        ])
        assert code == 0
        effective = json.loads(
            (out_dir / "effective-config.synth.json").read_text()
        )
        assert effective["seed"] == 9
        assert effective["command"] == "synth"

    def test_config_file_overrides_defaults(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text('{"seed": 7}', encoding="utf-8")
        out_dir = tmp_path / "out"
        assert main([
            "synth", "--out-dir", str(out_dir), "--size", "2",
            "--config", str(cfg),
        ]) == 0
        effective = json.loads(
            (out_dir / "effective-config.synth.json").read_text()
        )
        assert effective["seed"] == 7


class TestSynth:
    def test_writes_corpus_and_config(self, tmp_path):
        path = run_synth(tmp_path, size=5)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 5
        assert (path.parent / "effective-config.synth.json").exists()

    def test_seed_deterministic_bytes(self, tmp_path):
        a = run_synth(tmp_path, seed=3, out="a")
        b = run_synth(tmp_path, seed=3, out="b")
        c = run_synth(tmp_path, seed=4, out="c")
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() != c.read_bytes()

    def test_template_subset(self, tmp_path):
        out_dir = tmp_path / "out"
        assert main([
            "synth", "--out-dir", str(out_dir), "--size", "3",
            "--templates", "1",
        ]) == 0
        rows = [
            json.loads(line)
            for line in (out_dir / "corpus.jsonl").read_text().splitlines()
        ]
        assert all(r["utterance"] == "what album should i try first" for r in rows)

    def test_bad_size(self, tmp_path):
        assert main(["synth", "--out-dir", str(tmp_path), "--size", "0"]) == 2


class TestLabel:
    def test_hard_labeling(self, tmp_path, capsys):
        corpus = run_synth(tmp_path)
        labeled = run_label(tmp_path, corpus)
        out = capsys.readouterr().out
        assert "label density" in out
        rows = [json.loads(l) for l in labeled.read_text().splitlines()]
        assert all(r["labels"]["mode"] == "hard" for r in rows)

    def test_soft_and_hard_differ(self, tmp_path):
        corpus = run_synth(tmp_path)
        hard = run_label(tmp_path, corpus, "hard", out="hard")
        soft = run_label(tmp_path, corpus, "soft", out="soft")
        assert hard.read_bytes() != soft.read_bytes()
        rows = [json.loads(l) for l in soft.read_text().splitlines()]
        assert all(r["labels"]["mode"] == "soft" for r in rows)

    def test_missing_input_file(self, tmp_path, capsys):
        code = main([
            "label", "--in", str(tmp_path / "nope.jsonl"),
            "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_references_required(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text(
            '{"context": ["a"], "utterance": "b"}\n', encoding="utf-8"
        )
        code = main([
            "label", "--in", str(corpus), "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 2
        assert "lack references" in capsys.readouterr().err

    def test_soft_zero_fallback_without_embeddings(self, tmp_path):
        corpus = run_synth(tmp_path)
        code = main([
            "label", "--in", str(corpus), "--out-dir", str(tmp_path / "out"),
            "--mode", "soft", "--embedding-fallback", "zero",
        ])
        assert code == 2


class TestTrain:
    def test_artifacts_written(self, tmp_path, tiny_config, capsys):
        corpus = run_synth(tmp_path)
        labeled = run_label(tmp_path, corpus)
        out_dir = run_train(tmp_path, labeled, tiny_config)
        assert (out_dir / "checkpoint.bin").exists()
        assert (out_dir / "vocab.json").exists()
        assert (out_dir / "loss_log.csv").exists()
        assert (out_dir / "effective-config.train.json").exists()
        out = capsys.readouterr().out
        assert "final epoch losses" in out

    def test_epochs_default_small_corpus(self, tmp_path, capsys):
        corpus = run_synth(tmp_path, size=4)
        labeled = run_label(tmp_path, corpus)
        cfg = tmp_path / "config.json"
        section = dict(TINY_CONFIG)
        section["train"] = {"batch_size": 4}
        cfg.write_text(json.dumps(section), encoding="utf-8")
        out_dir = run_train(tmp_path, labeled, str(cfg))
        effective = json.loads(
            (out_dir / "effective-config.train.json").read_text()
        )
        assert effective["train"]["epochs"] == 20

    def test_unlabeled_mode_trains_from_raw_corpus(self, tmp_path, tiny_config):
        corpus = run_synth(tmp_path)
        out_dir = run_train(
            tmp_path, corpus, tiny_config, extra=["--label-mode", "none"]
        )
        assert (out_dir / "checkpoint.bin").exists()

    def test_alpha_flag_reaches_effective_config(self, tmp_path, tiny_config):
        corpus = run_synth(tmp_path)
        labeled = run_label(tmp_path, corpus)
        out_dir = run_train(
            tmp_path, labeled, tiny_config, extra=["--alpha", "0.25"]
        )
        effective = json.loads(
            (out_dir / "effective-config.train.json").read_text()
        )
        assert effective["train"]["picker_weight"] == 0.25


class TestRestoreAndEvaluate:
    @pytest.fixture
    def pipeline(self, tmp_path, tiny_config):
        corpus = run_synth(tmp_path)
        labeled = run_label(tmp_path, corpus)
        train_dir = run_train(tmp_path, labeled, tiny_config)
        return tmp_path, tiny_config, corpus, labeled, train_dir

    def test_restore_writes_predictions(self, pipeline):
        tmp_path, config, corpus, _, train_dir = pipeline
        out_dir = tmp_path / "restore"
        code = main([
            "restore", "--in", str(corpus),
            "--checkpoint", str(train_dir / "checkpoint.bin"),
            "--out-dir", str(out_dir), "--config", config,
        ])
        assert code == 0
        rows = [
            json.loads(l)
            for l in (out_dir / "predictions.jsonl").read_text().splitlines()
        ]
        assert [r["id"] for r in rows] == [str(i) for i in range(8)]

    def test_restore_nbest_records_scores(self, pipeline):
        tmp_path, config, corpus, _, train_dir = pipeline
        out_dir = tmp_path / "nbest"
        code = main([
            "restore", "--in", str(corpus),
            "--checkpoint", str(train_dir / "checkpoint.bin"),
            "--out-dir", str(out_dir), "--config", config, "--nbest", "2",
        ])
        assert code == 0
        rows = [
            json.loads(l)
            for l in (out_dir / "predictions.jsonl").read_text().splitlines()
        ]
        for row in rows:
            assert row["prediction"] == row["nbest"][0]["prediction"]
            scores = [item["score"] for item in row["nbest"]]
            assert scores == sorted(scores, reverse=True)

    def test_restore_rejects_foreign_vocab(self, pipeline, capsys):
        tmp_path, config, corpus, _, train_dir = pipeline
        other = generate_corpus(30, seed=99)
        other_path = tmp_path / "other.jsonl"
        save_corpus(other, other_path)
        from pickgen.corpus import LanguageConfig, build_vocab

        vocab = build_vocab(other, 50, LanguageConfig.for_language("english"))
        foreign = tmp_path / "foreign-vocab.json"
        vocab.save(str(foreign))
        code = main([
            "restore", "--in", str(corpus),
            "--checkpoint", str(train_dir / "checkpoint.bin"),
            "--vocab", str(foreign),
            "--out-dir", str(tmp_path / "out"), "--config", config,
        ])
        assert code == 1
        assert "does not match" in capsys.readouterr().err

    def test_restore_rejects_duplicate_ids(self, pipeline):
        tmp_path, config, _, _, train_dir = pipeline
        dup = tmp_path / "dup.jsonl"
        record = json.dumps(
            {"context": ["a"], "utterance": "b", "id": "same"}
        )
        dup.write_text(record + "\n" + record + "\n", encoding="utf-8")
        code = main([
            "restore", "--in", str(dup),
            "--checkpoint", str(train_dir / "checkpoint.bin"),
            "--out-dir", str(tmp_path / "out"), "--config", config,
        ])
        assert code == 1

    def test_evaluate_on_labeled_gold(self, pipeline, capsys):
        tmp_path, config, corpus, labeled, train_dir = pipeline
        restore_dir = tmp_path / "restore"
        assert main([
            "restore", "--in", str(corpus),
            "--checkpoint", str(train_dir / "checkpoint.bin"),
            "--out-dir", str(restore_dir), "--config", config,
        ]) == 0
        eval_dir = tmp_path / "eval"
        code = main([
            "evaluate", "--predictions", str(restore_dir / "predictions.jsonl"),
            "--gold", str(labeled), "--out-dir", str(eval_dir),
        ])
        assert code == 0
        report = json.loads((eval_dir / "report.json").read_text())
        for key in ("rouge1", "bleu2", "f1", "em", "pickup_ratio",
                    "difference", "bleu_by_length"):
            assert key in report
        assert "rouge1" in (eval_dir / "report.txt").read_text()
        assert "rouge1" in capsys.readouterr().out

    def test_evaluate_on_raw_gold(self, pipeline):
        tmp_path, config, corpus, _, train_dir = pipeline
        restore_dir = tmp_path / "restore"
        assert main([
            "restore", "--in", str(corpus),
            "--checkpoint", str(train_dir / "checkpoint.bin"),
            "--out-dir", str(restore_dir), "--config", config,
        ]) == 0
        code = main([
            "evaluate", "--predictions", str(restore_dir / "predictions.jsonl"),
            "--gold", str(corpus), "--out-dir", str(tmp_path / "eval"),
        ])
        assert code == 0

    def test_evaluate_missing_prediction(self, pipeline, capsys):
        tmp_path, _, corpus, _, _ = pipeline
        preds = tmp_path / "preds.jsonl"
        preds.write_text('{"id": "0", "prediction": "x"}\n', encoding="utf-8")
        code = main([
            "evaluate", "--predictions", str(preds),
            "--gold", str(corpus), "--out-dir", str(tmp_path / "eval"),
        ])
        assert code == 2
        assert "missing prediction" in capsys.readouterr().err


class TestPipelineDeterminism:
    def test_two_runs_byte_identical(self, tmp_path, tiny_config):
        outputs = []
        for tag in ("one", "two"):
            corpus = run_synth(tmp_path, out=f"synth-{tag}")
            labeled = run_label(tmp_path, corpus, out=f"label-{tag}")
            train_dir = run_train(
                tmp_path, labeled, tiny_config, out=f"train-{tag}"
            )
            restore_dir = tmp_path / f"restore-{tag}"
            assert main([
                "restore", "--in", str(corpus),
                "--checkpoint", str(train_dir / "checkpoint.bin"),
                "--out-dir", str(restore_dir), "--config", tiny_config,
            ]) == 0
            outputs.append((
                corpus.read_bytes(),
                labeled.read_bytes(),
                (train_dir / "checkpoint.bin").read_bytes(),
                (train_dir / "loss_log.csv").read_bytes(),
                (restore_dir / "predictions.jsonl").read_bytes(),
            ))
        assert outputs[0] == outputs[1]


def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "pickgen.cli", "--version"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip()
