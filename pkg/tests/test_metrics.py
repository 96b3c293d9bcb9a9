import pytest

from bwveil.metrics import MetricsError, confusion


def test_perfect_predictions():
    actual = ["p", "p", "n", "n"]
    r = confusion(actual, actual, positive="p")
    assert r.sensitivity == 1.0 and r.specificity == 1.0 and r.accuracy == 1.0
    assert (r.tp, r.fp, r.tn, r.fn) == (2, 0, 2, 0)


def test_all_negative_predictions():
    actual = ["p"] * 4 + ["n"] * 6
    r = confusion(["n"] * 10, actual, positive="p")
    assert r.sensitivity == 0.0
    assert r.specificity == 1.0
    assert r.accuracy == pytest.approx(0.6)


def test_no_positives_flags_sensitivity():
    r = confusion(["n", "p"], ["n", "n"], positive="p")
    assert r.sensitivity is None
    assert "sensitivity_undefined" in r.flags
    assert r.to_dict()["sensitivity"] is None


def test_counts_total_and_swap_symmetry():
    pred = ["p", "n", "p", "n", "p", "p"]
    actual = ["p", "p", "n", "n", "p", "n"]
    a = confusion(pred, actual, positive="p")
    b = confusion(pred, actual, positive="n")
    assert a.total == len(pred) == b.total
    assert a.sensitivity == b.specificity and a.specificity == b.sensitivity
    assert a.accuracy == b.accuracy


def test_length_mismatch_and_empty():
    with pytest.raises(MetricsError):
        confusion(["p"], ["p", "n"], positive="p")
    with pytest.raises(MetricsError):
        confusion([], [], positive="p")


def test_report_dict_shape():
    d = confusion(["p", "n"], ["p", "n"], positive="p").to_dict()
    assert set(d) == {"tp", "fp", "tn", "fn", "sensitivity", "specificity",
                      "accuracy", "flags"}
