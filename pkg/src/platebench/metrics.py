"""Plate normalization, exact-match scoring, the four summary metrics and ROC.

Counting regime: every image yields exactly one predicted plate and there is
no negative class. A correct read is a TP. A wrong read is both an FP (for
the plate that was emitted) and an FN (for the plate that was missed), and TN
is always 0. Accuracy is taken over images, so ``accuracy = tp / n`` and all
four metrics reduce to the same fraction.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from platebench.ocr import Prediction

_STRIP = re.compile(r"[^A-Z0-9]")
_OLD_BRAZIL = re.compile(r"[A-Z]{3}[0-9]{4}")
_MERCOSUL = re.compile(r"[A-Z]{3}[0-9][A-Z][0-9]{2}")


class EmptyPlateError(ValueError):
    pass


class DegenerateRocError(ValueError):
    """All scored items carry the same label, so FPR or TPR is undefined."""

    def __init__(self, label: bool):
        super().__init__(f"ROC undefined: every item is {'correct' if label else 'incorrect'}")
        self.label = label


class PlateFormat(str, enum.Enum):
    OLD_BRAZIL = "OldBrazil"
    MERCOSUL = "Mercosul"
    OTHER = "Other"

    @classmethod
    def parse(cls, text: str) -> "PlateFormat":
        key = text.strip().lower().replace("_", "").replace("-", "")
        for fmt in cls:
            if fmt.value.lower() == key:
                return fmt
        raise ValueError(f"unknown plate format {text!r}")


def normalize_plate(raw: str) -> str:
    """Uppercase and drop everything outside A-Z0-9. Raises EmptyPlateError if nothing is left."""
    text = _STRIP.sub("", raw.upper())
    if not text:
        raise EmptyPlateError(f"no plate characters in {raw!r}")
    return text


def classify_format(plate: str) -> PlateFormat:
    if _OLD_BRAZIL.fullmatch(plate):
        return PlateFormat.OLD_BRAZIL
    if _MERCOSUL.fullmatch(plate):
        return PlateFormat.MERCOSUL
    return PlateFormat.OTHER


@dataclass(frozen=True)
class ConfusionCounts:
    """TP/TN/FP/FN tallies plus ``n``, the number of scored items.

    ``n`` defaults to ``tp + tn + fp + fn``. In the exact-match regime it is
    the image count, which is smaller because each wrong read adds to both
    ``fp`` and ``fn``.
    """

    tp: int
    tn: int
    fp: int
    fn: int
    n: int = -1

    def __post_init__(self) -> None:
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n == -1:
            object.__setattr__(self, "n", self.tp + self.tn + self.fp + self.fn)
        if self.n < self.tp + self.tn or self.n > self.tp + self.tn + self.fp + self.fn:
            raise ValueError(f"n={self.n} inconsistent with counts")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.tn + other.tn,
            self.fp + other.fp,
            self.fn + other.fn,
            self.n + other.n,
        )

    def scaled(self, k: int) -> "ConfusionCounts":
        return ConfusionCounts(k * self.tp, k * self.tn, k * self.fp, k * self.fn, k * self.n)


@dataclass(frozen=True)
class MetricsSummary:
    accuracy: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalRecord:
    image_id: str
    truth: str
    prediction: Prediction
    correct: bool
    preprocess_elapsed: float = 0.0
    ocr_elapsed: float = 0.0

    @property
    def error(self) -> Optional[str]:
        return self.prediction.error


def is_correct(truth: str, raw_text: str) -> bool:
    try:
        return normalize_plate(raw_text) == truth
    except EmptyPlateError:
        return False


def count_exact_match(correct_flags: Iterable[bool]) -> ConfusionCounts:
    flags = list(correct_flags)
    tp = sum(1 for f in flags if f)
    wrong = len(flags) - tp
    return ConfusionCounts(tp=tp, tn=0, fp=wrong, fn=wrong, n=len(flags))


def evaluate(
    records: Sequence[tuple[str, Prediction]],
    image_ids: Optional[Sequence[str]] = None,
) -> tuple[list[EvalRecord], ConfusionCounts]:
    """Score ``(truth, prediction)`` pairs by exact match after normalization."""
    if not records:
        raise ValueError("evaluate needs at least one record")
    out = []
    for i, (truth, pred) in enumerate(records):
        if normalize_plate(truth) != truth:
            raise ValueError(f"truth {truth!r} is not a canonical plate string")
        image_id = image_ids[i] if image_ids is not None else str(i)
        out.append(EvalRecord(image_id, truth, pred, is_correct(truth, pred.raw_text)))
    return out, count_exact_match(r.correct for r in out)


def summarize(counts: ConfusionCounts) -> MetricsSummary:
    """Accuracy, precision, recall and F1; a zero denominator gives 0.

    F1 uses ``2tp / (2tp + fp + fn)``, the closed form of the harmonic mean,
    so equal precision and recall give an F1 that is bit-equal to both.
    """
    if counts.n == 0:
        raise ValueError("cannot summarize all-zero counts")
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    accuracy = (tp + tn) / counts.n
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return MetricsSummary(accuracy, precision, recall, f1)


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float], ...]
    auc: float


def roc_curve(scored: Sequence[tuple[float, bool]]) -> RocCurve:
    """ROC over distinct score thresholds (ties grouped) with trapezoidal AUC.

    Positives are correct reads, and the score is the backend confidence. The
    area uses integer counts, so it equals the pair-counting probability
    ``P(s+ > s-) + P(s+ == s-) / 2`` up to one final division.
    """
    if not scored:
        raise ValueError("roc_curve needs at least one scored item")
    n_pos = sum(1 for _, y in scored if y)
    n_neg = len(scored) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateRocError(bool(n_pos))
    ordered = sorted(scored, key=lambda item: -item[0])
    points = [(0.0, 0.0)]
    tp = fp = 0
    area2 = 0
    i = 0
    while i < len(ordered):
        score = ordered[i][0]
        prev_tp, prev_fp = tp, fp
        while i < len(ordered) and ordered[i][0] == score:
            if ordered[i][1]:
                tp += 1
            else:
                fp += 1
            i += 1
        area2 += (fp - prev_fp) * (tp + prev_tp)
        points.append((fp / n_neg, tp / n_pos))
    return RocCurve(tuple(points), area2 / (2 * n_pos * n_neg))
