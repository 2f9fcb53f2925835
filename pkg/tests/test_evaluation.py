"""Metric math, seed aggregation, and the experiment report shape."""

import json

import numpy as np
import pytest

from oracles import metrics_from_pairs
from tinyabsa.errors import AggregationError, ReportError
from tinyabsa.evaluation import (SeedAggregate, accuracy, aggregate_seeds,
                                 confusion_matrix, experiment_report,
                                 format_aggregate, macro_f1, micro_f1,
                                 per_class_f1, render_report, report_from_json,
                                 report_to_json, weighted_f1)


class TestMetrics:
    def test_perfect_predictions(self):
        gold = [0] * 10 + [1] * 10 + [2] * 10
        cm = confusion_matrix(gold, gold)
        assert accuracy(cm) == 1.0
        assert macro_f1(cm) == 1.0

    def test_hand_confusion_matrix(self):
        # rows gold, cols predicted: [[5,0,0],[0,0,5],[0,0,5]]
        gold = [0] * 5 + [1] * 5 + [2] * 5
        predicted = [0] * 5 + [2] * 5 + [2] * 5
        cm = confusion_matrix(gold, predicted)
        np.testing.assert_array_equal(cm, [[5, 0, 0], [0, 0, 5], [0, 0, 5]])
        assert accuracy(cm) == pytest.approx(10 / 15)
        np.testing.assert_allclose(per_class_f1(cm), [1.0, 0.0, 2 / 3])
        assert macro_f1(cm) == pytest.approx(5 / 9)

    def test_absent_class_scores_zero(self):
        cm = confusion_matrix([0, 0, 1], [0, 0, 1])
        assert per_class_f1(cm)[2] == 0.0
        assert macro_f1(cm) == pytest.approx(2 / 3)

    def test_random_instances_match_bruteforce(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 40))
            gold = rng.integers(0, 3, n)
            predicted = rng.integers(0, 3, n)
            cm = confusion_matrix(gold, predicted)
            ref_acc, ref_f1 = metrics_from_pairs(gold, predicted)
            assert accuracy(cm) == ref_acc
            assert macro_f1(cm) == pytest.approx(ref_f1, abs=1e-12)

    def test_micro_equals_accuracy(self):
        rng = np.random.default_rng(1)
        gold = rng.integers(0, 3, 200)
        predicted = rng.integers(0, 3, 200)
        cm = confusion_matrix(gold, predicted)
        assert micro_f1(cm) == accuracy(cm)

    def test_weighted_f1_uses_support(self):
        cm = np.array([[8, 2, 0], [0, 1, 0], [0, 0, 1]])
        weights = cm.sum(axis=1) / cm.sum()
        assert weighted_f1(cm) == pytest.approx(float((per_class_f1(cm) * cm.sum(axis=1)).sum() / cm.sum()))
        assert abs(weighted_f1(cm) - float((per_class_f1(cm) * weights).sum())) < 1e-12

    def test_empty_test_set_rejected(self):
        from tinyabsa.data import generate_synthetic
        from tinyabsa.errors import ConfigurationError
        from tinyabsa.evaluation import evaluate_model
        from tinyabsa.tokenizer import build_vocab
        from tinyabsa.training import TrainConfig, run_training

        examples = generate_synthetic(12, vocab_size=20, seed=0)
        vocab = build_vocab([ex.text for ex in examples])
        cfg = TrainConfig(lr=1e-3, batch_size=8, epochs=1, patience=1,
                          encoder_preset="tiny", head_kind="fcn", max_len=24)
        model, _ = run_training(cfg, examples, examples, vocab)
        with pytest.raises(ConfigurationError):
            evaluate_model(model, [])

    def test_shuffling_never_changes_metrics(self):
        rng = np.random.default_rng(2)
        gold = rng.integers(0, 3, 100)
        predicted = rng.integers(0, 3, 100)
        base = confusion_matrix(gold, predicted)
        perm = rng.permutation(100)
        shuffled = confusion_matrix(gold[perm], predicted[perm])
        np.testing.assert_array_equal(base, shuffled)


class TestAggregation:
    def test_hand_mean_and_stderr(self):
        agg = aggregate_seeds([1.0, 2.0, 3.0, 4.0, 5.0])
        assert agg.mean == pytest.approx(3.0, abs=1e-12)
        assert agg.stderr == pytest.approx(np.sqrt(2.5) / np.sqrt(5), abs=1e-12)
        assert format_aggregate(agg) == "3.00 ± 0.71"

    def test_identical_values_zero_stderr(self):
        agg = aggregate_seeds([0.8, 0.8, 0.8])
        assert agg.stderr == 0.0

    def test_single_value_rejected(self):
        with pytest.raises(AggregationError):
            aggregate_seeds([1.0])

    def test_order_invariance(self):
        a = aggregate_seeds([3.0, 1.0, 2.0])
        b = aggregate_seeds([1.0, 2.0, 3.0])
        assert (a.mean, a.stderr) == (b.mean, b.stderr)

    def test_two_decimal_percent_formatting(self):
        agg = SeedAggregate(values=[], mean=72.97, stderr=1.32)
        assert format_aggregate(agg) == "72.97 ± 1.32"


def grid_cells(heads, encoders, base=70.0):
    cells = {}
    for i, encoder in enumerate(encoders):
        for j, head in enumerate(heads):
            offset = 3.0 * i + j
            cells[(head, encoder)] = {
                "acc": aggregate_seeds([base + offset, base + offset + 1.0]),
                "f1": aggregate_seeds([base + offset - 8.0, base + offset - 7.0]),
            }
    return cells


class TestReport:
    def test_three_by_two_grid_renders_six_rows(self):
        heads = ["fcn", "cnn", "gcn"]
        encoders = ["tiny", "small"]
        report = experiment_report(grid_cells(heads, encoders), heads, encoders)
        assert len(report.rows) == 6
        text = render_report(report)
        lines = text.strip("\n").split("\n")
        assert lines[0].split() == ["Model", "Encoder", "ACC", "F1"]
        assert len(lines) == 8  # header + rule + six rows
        assert lines[2].startswith("FCN")
        for line in lines[2:]:
            assert "±" in line

    def test_single_cell_grid(self):
        report = experiment_report(grid_cells(["cnn"], ["tiny"]), ["cnn"], ["tiny"])
        assert len(report.rows) == 1

    def test_missing_cell_is_named(self):
        cells = grid_cells(["fcn"], ["tiny"])
        with pytest.raises(ReportError) as err:
            experiment_report(cells, ["fcn", "cnn"], ["tiny"])
        assert "cnn" in str(err.value) and "tiny" in str(err.value)

    def test_json_round_trip_renders_identically(self):
        heads = ["fcn", "cnn", "gcn"]
        encoders = ["tiny", "small"]
        report = experiment_report(grid_cells(heads, encoders), heads, encoders,
                                   protocol={"seeds": [0, 1]})
        text = report_to_json(report)
        assert render_report(report_from_json(text)) == render_report(report)
        doc = json.loads(text)
        assert doc["columns"] == ["Model", "Encoder", "ACC", "F1"]
        assert doc["rows"][0]["display"]["acc"].count("±") == 1
