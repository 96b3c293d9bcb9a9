"""Confusion-matrix accounting for pixel- and lesion-level evaluations."""

from __future__ import annotations

from dataclasses import dataclass


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: float | None
    specificity: float | None
    accuracy: float
    flags: tuple[str, ...] = ()

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "MetricsReport":
        total = tp + fp + tn + fn
        if total <= 0:
            raise MetricsError("empty confusion matrix")
        flags = []
        sensitivity = specificity = None
        if tp + fn > 0:
            sensitivity = tp / (tp + fn)
        else:
            flags.append("sensitivity_undefined")
        if tn + fp > 0:
            specificity = tn / (tn + fp)
        else:
            flags.append("specificity_undefined")
        return cls(tp, fp, tn, fn, sensitivity, specificity,
                   (tp + tn) / total, tuple(flags))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "accuracy": self.accuracy,
            "flags": list(self.flags),
        }


def confusion(predicted, actual, positive) -> MetricsReport:
    """Counts and rates with `positive` as the positive class.

    Undefined rates are reported as None and flagged, never coerced to 0
    or 1.
    """
    predicted = list(predicted)
    actual = list(actual)
    if len(predicted) != len(actual):
        raise MetricsError(
            f"{len(predicted)} predictions for {len(actual)} actual labels")
    if not predicted:
        raise MetricsError("empty label lists")
    tp = fp = tn = fn = 0
    for p, a in zip(predicted, actual):
        if a == positive:
            if p == positive:
                tp += 1
            else:
                fn += 1
        else:
            if p == positive:
                fp += 1
            else:
                tn += 1
    return MetricsReport.from_counts(tp, fp, tn, fn)
