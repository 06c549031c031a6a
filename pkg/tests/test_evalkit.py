import numpy as np
import pytest

from edgebin.errors import LengthMismatch, UnknownLabel
from edgebin.evalkit import ConfusionMatrix, confusion, format_table, metrics, read_predictions
from edgebin.ir import BIN_LABELS


def test_perfect_predictions_are_diagonal():
    labels = list(BIN_LABELS) * 3
    cm = confusion(labels, labels)
    assert np.array_equal(cm.counts, 3 * np.eye(7, dtype=int))
    m = metrics(cm)
    assert m.top1_accuracy == m.macro_precision == 1.0
    assert m.per_class_recall == [1.0] * 7


def test_single_off_diagonal():
    cm = confusion(["cardboard"], ["paper"])
    assert cm.total == 1
    assert cm.counts[BIN_LABELS.index("paper"), BIN_LABELS.index("cardboard")] == 1


def test_random_pairs_recount(rng):
    truths = list(rng.choice(BIN_LABELS, 1000))
    preds = list(rng.choice(BIN_LABELS, 1000))
    cm = confusion(preds, truths)
    assert cm.total == 1000
    for i, lab in enumerate(BIN_LABELS):
        assert cm.counts[i].sum() == truths.count(lab)
        for j, lab2 in enumerate(BIN_LABELS):
            assert cm.counts[i, j] == sum(t == lab and p == lab2 for t, p in zip(truths, preds))


def test_errors():
    with pytest.raises(LengthMismatch):
        confusion(["glass"], [])
    with pytest.raises(LengthMismatch):
        confusion([], [])
    with pytest.raises(UnknownLabel):
        confusion(["banana"], ["glass"])


def test_238_sample_accuracy():
    counts = np.zeros((7, 7), int)
    np.fill_diagonal(counts, [40, 40, 40, 40, 40, 27, 0])
    counts[0, 2] = 11
    cm = ConfusionMatrix(counts)
    assert cm.total == 238
    assert round(100 * metrics(cm).top1_accuracy, 2) == 95.38


def test_two_class_hand_arithmetic():
    m = metrics(ConfusionMatrix(np.array([[90, 10], [0, 100]]), ("a", "b")))
    assert m.per_class_recall[0] == 0.9 and m.per_class_precision[0] == 1.0
    assert m.per_class_precision[1] == pytest.approx(100 / 110)
    assert m.macro_precision == pytest.approx((1 + 100 / 110) / 2)


def test_undefined_precision_excluded():
    m = metrics(ConfusionMatrix(np.array([[5, 0], [5, 0]]), ("a", "b")))
    assert m.per_class_precision == [0.5, None]
    assert m.undefined_precision == ["b"] and m.macro_precision == 0.5


def test_invariants(rng):
    for _ in range(20):
        cm = ConfusionMatrix(rng.integers(0, 20, (7, 7)))
        m = metrics(cm)
        values = [m.top1_accuracy, m.macro_precision, *m.per_class_precision, *m.per_class_recall]
        assert all(0 <= v <= 1 for v in values if v is not None)
        weighted = sum(r * s for r, s in zip(m.per_class_recall, m.support) if r is not None) / cm.total
        assert m.top1_accuracy == pytest.approx(weighted)
        perm = list(rng.permutation(BIN_LABELS))
        mp = metrics(cm.permuted(perm))
        assert mp.top1_accuracy == pytest.approx(m.top1_accuracy)
        assert mp.macro_precision == pytest.approx(m.macro_precision)
        for lab in BIN_LABELS:
            assert mp.per_class_recall[perm.index(lab)] == m.per_class_recall[BIN_LABELS.index(lab)]


def test_merge():
    a = confusion(["glass"], ["glass"])
    b = confusion(["paper"], ["glass"])
    assert (a + b).total == 2
    with pytest.raises(ValueError):
        a.merge(ConfusionMatrix(np.zeros((2, 2)), ("x", "y")))


def test_matrix_validation_and_empty():
    with pytest.raises(ValueError):
        ConfusionMatrix(np.zeros((2, 3)), ("a", "b"))
    with pytest.raises(ValueError):
        ConfusionMatrix(-np.ones((2, 2)), ("a", "b"))
    with pytest.raises(ValueError):
        metrics(ConfusionMatrix(np.zeros((2, 2)), ("a", "b")))


def test_table_and_csv(tmp_path):
    p = tmp_path / "preds.csv"
    p.write_text("truth,pred\nglass,glass\nmetal, glass\n")
    truths, preds = read_predictions(p)
    assert truths == ["glass", "metal"] and preds == ["glass", "glass"]
    text = format_table(confusion(preds, truths))
    assert "top-1 accuracy   50.00%" in text
    assert "n/a" in text
