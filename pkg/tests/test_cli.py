"""Config parsing and the command-line surface, end to end on tiny corpora."""

import json
import os

import pytest

from tinyabsa.cli import main
from tinyabsa.config import load_run_config
from tinyabsa.data import generate_synthetic, load_jsonl, save_jsonl
from tinyabsa.errors import ConfigurationError


def write_config(path, body):
    path.write_text(body)
    return str(path)


class TestRunConfig:
    def test_file_values_parsed(self, tmp_path):
        cfg = load_run_config(write_config(tmp_path / "run.ini", """
[data]
train = a.jsonl
val = b.jsonl
test = c.jsonl

[encoder]
preset = tiny
max_len = 24

[head]
kind = cnn

[train]
lr = 0.001
epochs = 4
patience = 4
seed = 3

[experiment]
heads = fcn,cnn
encoders = tiny
seeds = 0,1

[paths]
vocab = v.txt
out_dir = runs/x
"""))
        assert cfg.data_train == "a.jsonl"
        assert cfg.head_kind == "cnn"
        assert cfg.train.lr == 0.001
        assert cfg.train.seed == 3
        assert cfg.train.max_len == 24
        assert cfg.grid_heads == ["fcn", "cnn"]
        assert cfg.grid_seeds == [0, 1]
        assert cfg.out_dir == "runs/x"

    def test_overrides_win(self, tmp_path):
        path = write_config(tmp_path / "run.ini", "[train]\nlr = 0.001\nseed = 1\n")
        cfg = load_run_config(path, ["train.lr=0.5", "head.kind=gcn"])
        assert cfg.train.lr == 0.5
        assert cfg.head_kind == "gcn"

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path / "run.ini", "[train]\nlearning_rate = 0.1\n")
        with pytest.raises(ConfigurationError):
            load_run_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = write_config(tmp_path / "run.ini", "[optimizer]\nlr = 0.1\n")
        with pytest.raises(ConfigurationError):
            load_run_config(path)

    def test_bad_head_kind_rejected(self, tmp_path):
        path = write_config(tmp_path / "run.ini", "[head]\nkind = lstm\n")
        with pytest.raises(ConfigurationError):
            load_run_config(path)

    def test_missing_file_rejected(self):
        with pytest.raises(ConfigurationError):
            load_run_config("no/such/file.ini")


@pytest.fixture()
def corpus(tmp_path):
    path = tmp_path / "corpus.jsonl"
    save_jsonl(str(path), generate_synthetic(60, vocab_size=40, seed=5))
    return path


class TestPrepare:
    def test_writes_splits_and_vocab(self, tmp_path, corpus, capsys):
        out = tmp_path / "prep"
        assert main(["prepare", "--data", str(corpus), "--out", str(out)]) == 0
        train = load_jsonl(str(out / "train.jsonl"))
        val = load_jsonl(str(out / "val.jsonl"))
        test = load_jsonl(str(out / "test.jsonl"))
        assert len(train) + len(val) + len(test) == 60
        assert abs(len(train) - 42) <= 1
        assert (out / "vocab.txt").exists()

    def test_rerun_is_identical(self, tmp_path, corpus):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["prepare", "--data", str(corpus), "--out", str(out_a), "--seed", "4"])
        main(["prepare", "--data", str(corpus), "--out", str(out_b), "--seed", "4"])
        for name in ("train.jsonl", "val.jsonl", "test.jsonl", "vocab.txt"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_corrupt_line_reports_line_number_on_stderr(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"text": "x", "aspect": "x", "aspect_start": 0, '
                       '"aspect_end": 1, "label": "neutral"}\n{{{\n')
        code = main(["prepare", "--data", str(bad), "--out", str(tmp_path / "o")])
        assert code != 0
        assert ":2:" in capsys.readouterr().err


class TestStats:
    def test_text_and_json(self, corpus, capsys):
        assert main(["stats", "--data", str(corpus)]) == 0
        text = capsys.readouterr().out
        assert "examples: 60" in text
        assert main(["stats", "--data", str(corpus), "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["total"] == 60

    def test_empty_corpus_zero_report(self, tmp_path, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert main(["stats", "--data", str(empty), "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["total"] == 0


class TestSynth:
    def test_writes_reproducible_corpus(self, tmp_path, capsys):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(["synth", "--out", str(a), "--n", "20", "--seed", "9"]) == 0
        assert main(["synth", "--out", str(b), "--n", "20", "--seed", "9"]) == 0
        assert a.read_bytes() == b.read_bytes()


def prepare_and_config(tmp_path, corpus, head="fcn", epochs=2, extra=""):
    out = tmp_path / "prep"
    main(["prepare", "--data", str(corpus), "--out", str(out)])
    config = tmp_path / "run.ini"
    config.write_text(f"""
[data]
train = {out / 'train.jsonl'}
val = {out / 'val.jsonl'}
test = {out / 'test.jsonl'}

[encoder]
preset = tiny
max_len = 24

[head]
kind = {head}

[train]
lr = 0.001
epochs = {epochs}
patience = {epochs}
seed = 0
{extra}

[paths]
vocab = {out / 'vocab.txt'}
out_dir = {tmp_path / 'run'}
""")
    return config


class TestTrainCommand:
    def test_writes_checkpoint_and_history(self, tmp_path, corpus, capsys):
        config = prepare_and_config(tmp_path, corpus)
        assert main(["train", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert sum(1 for line in out.splitlines() if line.startswith("epoch ")) == 2
        run_dir = tmp_path / "run"
        assert (run_dir / "checkpoint.ckpt").exists()
        history = json.loads((run_dir / "history.json").read_text())
        assert history["stop_reason"] in ("completed", "early_stopped")
        assert len(history["epochs"]) == 2
        assert all("timestamp" in rec for rec in history["epochs"])

    def test_invalid_preset_exits_with_config_error(self, tmp_path, corpus, capsys):
        config = prepare_and_config(tmp_path, corpus)
        code = main(["train", "--config", str(config), "--set", "encoder.preset=huge"])
        assert code == 2
        assert "preset" in capsys.readouterr().err

    def test_same_seed_writes_identical_checkpoints(self, tmp_path, corpus):
        config = prepare_and_config(tmp_path, corpus)
        main(["train", "--config", str(config), "--out-dir", str(tmp_path / "r1")])
        main(["train", "--config", str(config), "--out-dir", str(tmp_path / "r2")])
        assert (tmp_path / "r1" / "checkpoint.ckpt").read_bytes() == \
            (tmp_path / "r2" / "checkpoint.ckpt").read_bytes()

    def test_env_var_supplies_config(self, tmp_path, corpus, monkeypatch):
        config = prepare_and_config(tmp_path, corpus)
        monkeypatch.setenv("TINYABSA_CONFIG", str(config))
        assert main(["train"]) == 0

    def test_missing_config_is_an_error(self, monkeypatch, capsys):
        monkeypatch.delenv("TINYABSA_CONFIG", raising=False)
        assert main(["train"]) == 2


class TestEvaluateAndPredict:
    @pytest.fixture()
    def checkpoint(self, tmp_path, corpus):
        config = prepare_and_config(tmp_path, corpus, epochs=3)
        main(["train", "--config", str(config)])
        return tmp_path / "run" / "checkpoint.ckpt", tmp_path / "prep" / "test.jsonl"

    def test_evaluate_outputs_metrics(self, checkpoint, capsys):
        ckpt, test_path = checkpoint
        assert main(["evaluate", "--checkpoint", str(ckpt), "--data", str(test_path),
                     "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc) >= {"accuracy", "macro_f1", "confusion"}

    def test_predict_probabilities_sum_to_one(self, checkpoint, capsys):
        ckpt, _ = checkpoint
        assert main(["predict", "--checkpoint", str(ckpt),
                     "--text", "the vaccine was wonderful today",
                     "--aspect", "vaccine"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["label"] in ("negative", "neutral", "positive")
        assert sum(doc["probabilities"].values()) == pytest.approx(1.0, abs=1e-6)

    def test_predict_with_offsets(self, checkpoint, capsys):
        ckpt, _ = checkpoint
        text = "the vaccine was wonderful today"
        start = text.find("vaccine")
        assert main(["predict", "--checkpoint", str(ckpt), "--text", text,
                     "--aspect-start", str(start),
                     "--aspect-end", str(start + len("vaccine"))]) == 0
        assert json.loads(capsys.readouterr().out)["label"]

    def test_invalid_span_rejected(self, checkpoint, capsys):
        ckpt, _ = checkpoint
        code = main(["predict", "--checkpoint", str(ckpt),
                     "--text", "no such aspect here", "--aspect", "vaccine"])
        assert code == 1
        assert "aspect" in capsys.readouterr().err

    def test_predict_on_a_real_tweet(self, checkpoint, capsys):
        # out-of-domain text: a label comes back, but none is asserted
        from test_data import COVID_TWEET

        ckpt, _ = checkpoint
        assert main(["predict", "--checkpoint", str(ckpt), "--text", COVID_TWEET,
                     "--aspect", "COVID vaccine"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["label"] in ("negative", "neutral", "positive")
        assert sum(doc["probabilities"].values()) == pytest.approx(1.0, abs=1e-6)


class TestPrecomputedViaCli:
    def test_train_on_frozen_embeddings(self, tmp_path, corpus):
        import numpy as np

        from tinyabsa.encoder import save_embeddings

        prep = tmp_path / "prep"
        main(["prepare", "--data", str(corpus), "--out", str(prep)])
        rng = np.random.default_rng(3)
        emb_paths = {}
        for name in ("train", "val", "test"):
            n = len(load_jsonl(str(prep / f"{name}.jsonl")))
            emb_paths[name] = str(tmp_path / f"emb.{name}.ckpt")
            save_embeddings(emb_paths[name],
                            [rng.standard_normal((24, 16)).astype(np.float32)
                             for _ in range(n)])
        config = tmp_path / "run.ini"
        config.write_text(f"""
[data]
train = {prep / 'train.jsonl'}
val = {prep / 'val.jsonl'}
test = {prep / 'test.jsonl'}

[encoder]
preset = precomputed
max_len = 24
embeddings_train = {emb_paths['train']}
embeddings_val = {emb_paths['val']}
embeddings_test = {emb_paths['test']}

[train]
lr = 0.001
epochs = 2
patience = 2

[paths]
out_dir = {tmp_path / 'run'}
""")
        assert main(["train", "--config", str(config)]) == 0
        ckpt = tmp_path / "run" / "checkpoint.ckpt"
        assert ckpt.exists()
        assert main(["evaluate", "--checkpoint", str(ckpt),
                     "--data", str(prep / "test.jsonl"),
                     "--embeddings", emb_paths["test"], "--json"]) == 0

    def test_missing_embeddings_key_is_config_error(self, tmp_path, corpus, capsys):
        prep = tmp_path / "prep"
        main(["prepare", "--data", str(corpus), "--out", str(prep)])
        config = tmp_path / "run.ini"
        config.write_text(f"""
[data]
train = {prep / 'train.jsonl'}
val = {prep / 'val.jsonl'}

[encoder]
preset = precomputed
""")
        assert main(["train", "--config", str(config)]) == 2
        assert "embeddings_train" in capsys.readouterr().err


class TestExperimentCommand:
    def test_grid_runs_and_reports(self, tmp_path, corpus, capsys):
        config = prepare_and_config(tmp_path, corpus, epochs=2, extra="")
        exp_dir = tmp_path / "exp"
        assert main(["experiment", "--config", str(config),
                     "--set", "experiment.heads=fcn,cnn",
                     "--set", "experiment.encoders=tiny",
                     "--set", "experiment.seeds=0,1",
                     "--out-dir", str(exp_dir)]) == 0
        report = json.loads((exp_dir / "report.json").read_text())
        assert len(report["rows"]) == 2
        assert (exp_dir / "report.txt").exists()
        assert (exp_dir / "manifest.json").exists()

    def test_resume_skips_manifest_cells(self, tmp_path, corpus, capsys):
        config = prepare_and_config(tmp_path, corpus, epochs=2)
        exp_dir = tmp_path / "exp"
        exp_dir.mkdir()
        sentinel = {
            "tiny|fcn|seed0": {
                "encoder": "tiny", "head": "fcn", "seed": 0,
                "test": {"accuracy": 0.123, "macro_f1": 0.123, "micro_f1": 0.123,
                         "weighted_f1": 0.123, "per_class_f1": [0.1, 0.1, 0.1],
                         "confusion": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "loss": 9.9},
                "best_epoch": 1, "stop_reason": "completed", "epochs_run": 1,
            }
        }
        (exp_dir / "manifest.json").write_text(json.dumps(sentinel))
        assert main(["experiment", "--config", str(config),
                     "--set", "experiment.heads=fcn",
                     "--set", "experiment.encoders=tiny",
                     "--set", "experiment.seeds=0,1",
                     "--out-dir", str(exp_dir)]) == 0
        out = capsys.readouterr().out
        assert "[skip] tiny|fcn|seed0" in out
        report = json.loads((exp_dir / "report.json").read_text())
        seeds = {entry["seed"]: entry["accuracy"]
                 for entry in report["rows"][0]["details"]["per_seed"]}
        assert seeds[0] == 0.123  # sentinel reused, not recomputed


class TestArgparseContract:
    def test_unknown_flag_rejected(self, corpus):
        with pytest.raises(SystemExit) as exit_info:
            main(["stats", "--data", str(corpus), "--frobnicate"])
        assert exit_info.value.code == 2

    def test_help_lists_every_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exit_info:
            main(["--help"])
        assert exit_info.value.code == 0
        text = capsys.readouterr().out
        for command in ("prepare", "stats", "synth", "train", "experiment",
                        "evaluate", "predict"):
            assert command in text
