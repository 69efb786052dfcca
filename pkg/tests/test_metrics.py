import numpy as np
import pytest

from dmtnet.metrics import build_eval_report, confusion_matrix, precision_recall, read_confusion_csv


def test_perfect_predictor():
    y = np.array([0, 1, 2, 2, 1])
    rep = build_eval_report(y, y, ["a", "b", "c"])
    assert rep.accuracy == 1.0
    np.testing.assert_array_equal(rep.precision, 1.0)
    np.testing.assert_array_equal(rep.confusion, np.diag([1, 2, 2]))


def test_constant_predictor_on_balanced_data():
    y = np.repeat(np.arange(4), 5)
    rep = build_eval_report(y, np.zeros_like(y), list("abcd"))
    assert rep.accuracy == pytest.approx(0.25)
    np.testing.assert_allclose(rep.recall, [1, 0, 0, 0])
    np.testing.assert_allclose(rep.precision, [0.25, 0, 0, 0])


def test_hand_counted_fixture():
    y_true = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]
    y_pred = [0, 0, 0, 1, 1, 1, 1, 1, 1, 0]
    cm = confusion_matrix(y_true, y_pred, 2)
    np.testing.assert_array_equal(cm, [[3, 2], [1, 4]])
    precision, recall = precision_recall(cm)
    np.testing.assert_allclose(precision, [3 / 4, 4 / 6])
    np.testing.assert_allclose(recall, [3 / 5, 4 / 5])


def test_csv_outputs(tmp_path):
    rep = build_eval_report([0, 1, 1], [0, 1, 0], ["walk", "wave"])
    rep.write_confusion_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines() == ["walk,wave", "1,0", "1,1"]
    names, cm = read_confusion_csv(tmp_path / "c.csv")
    assert names == ["walk", "wave"]
    np.testing.assert_array_equal(cm, rep.confusion)
    rep.write_metrics_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "class,precision,recall,support"
    assert lines[1] == "walk,0.500000,1.000000,1"
    assert lines[-1].startswith("overall_accuracy,0.666667")


def test_report_dict_and_table():
    rep = build_eval_report([0, 1], [0, 1], ["x", "y"], wall_clock=1.5, config={"seed": 3})
    d = rep.to_dict()
    assert d["support"] == [1, 1] and d["config"] == {"seed": 3} and d["wall_clock_seconds"] == 1.5
    assert "accuracy 1.0000 over 2 samples" in rep.format_table()


def test_empty_report():
    rep = build_eval_report([], [], ["a", "b"])
    assert rep.accuracy == 0.0
