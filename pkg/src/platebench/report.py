"""Run and comparison reports: table, JSON schema, and recomputation checks.

JSON layout (``schema`` identifies the kind)::

    platebench.run/1
        pipeline, backend, bins
        records[]   image, truth, predicted, confidence, correct, error,
                    timing{preprocess, ocr, stages[]{stage, elapsed}}
        counts      tp, tn, fp, fn, n
        metrics     accuracy, precision, recall, f1
        roc         {auc, points[[fpr, tpr], ...]} or null
        roc_notice  string or null
        runtime     {preprocess, ocr, total}: n, mean, median, std,
                    gauss_mu, gauss_sigma, histogram{edges, counts}

    platebench.comparison/1
        table[]     preprocessing, accuracy, precision, recall, f1
        anova_accuracy, anova_accuracy_notice
        anova_runtime, anova_runtime_notice
        runs[]      platebench.run/1 objects

Every derived number is a pure function of ``records`` (plus ``bins``), so
:func:`verify_report` can rebuild the whole document and diff it.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from platebench.metrics import (
    ConfusionCounts,
    DegenerateRocError,
    EvalRecord,
    MetricsSummary,
    RocCurve,
    count_exact_match,
    is_correct,
    roc_curve,
    summarize,
)
from platebench.ocr import Prediction
from platebench.preprocess import StageTiming
from platebench.stats import (
    AnovaResult,
    RuntimeStats,
    ZeroWithinVarianceError,
    anova_oneway,
    runtime_summary,
)

RUN_SCHEMA = "platebench.run/1"
COMPARISON_SCHEMA = "platebench.comparison/1"
TABLE_COLUMNS = ("Preprocessing", "Accuracy", "Precision", "Recall", "F1-Score")
CSV_HEADER = ("preprocessing", "accuracy", "precision", "recall", "f1")
SINGLE_CLASS_NOTICE = "AUC undefined (single class)"
CONSTANT_SCORE_NOTICE = "ROC not computed (constant confidence)"
ZERO_VARIANCE_NOTICE = "ANOVA not applicable: zero within-group variance"
# Keys whose values are wall-clock measurements rather than results.
TIMING_KEYS = frozenset({"timing", "runtime", "anova_runtime", "anova_runtime_notice"})


class ReportError(ValueError):
    pass


class SchemaError(ReportError):
    pass


@dataclass(frozen=True)
class TimedRecord:
    """An evaluation record plus the per-stage preprocessing breakdown."""

    record: EvalRecord
    stages: tuple[StageTiming, ...] = ()

    @property
    def total_elapsed(self) -> float:
        return self.record.preprocess_elapsed + self.record.ocr_elapsed


@dataclass
class RunReport:
    pipeline: str
    backend: str
    records: list[TimedRecord]
    bins: int
    counts: ConfusionCounts
    metrics: MetricsSummary
    runtime: dict[str, RuntimeStats]
    roc: Optional[RocCurve]
    roc_notice: Optional[str]

    @property
    def failures(self) -> list[TimedRecord]:
        return [r for r in self.records if r.record.error is not None]


@dataclass
class ComparisonReport:
    runs: list[RunReport]
    anova_accuracy: Optional[AnovaResult]
    anova_accuracy_notice: Optional[str]
    anova_runtime: Optional[AnovaResult]
    anova_runtime_notice: Optional[str]
    rows: list[tuple[str, float, float, float, float]] = field(default_factory=list)


# ------------------------------------------------------------------ build


def build_run_report(pipeline: str, backend: str, records: list[TimedRecord], bins: int = 10) -> RunReport:
    if not records:
        raise ReportError("a run report needs at least one record")
    counts = count_exact_match(r.record.correct for r in records)
    runtime = {
        "preprocess": runtime_summary([r.record.preprocess_elapsed for r in records], bins),
        "ocr": runtime_summary([r.record.ocr_elapsed for r in records], bins),
        "total": runtime_summary([r.total_elapsed for r in records], bins),
    }
    scored = [(r.record.prediction.confidence, r.record.correct) for r in records]
    roc, notice = None, None
    if len({s for s, _ in scored}) < 2:
        # Label check first so all-correct runs still report the single-class case.
        notice = SINGLE_CLASS_NOTICE if len({y for _, y in scored}) < 2 else CONSTANT_SCORE_NOTICE
    else:
        try:
            roc = roc_curve(scored)
        except DegenerateRocError:
            notice = SINGLE_CLASS_NOTICE
    return RunReport(pipeline, backend, list(records), bins, counts, summarize(counts), runtime, roc, notice)


def _anova_or_notice(groups: list[list[float]]) -> tuple[Optional[AnovaResult], Optional[str]]:
    try:
        return anova_oneway(groups), None
    except ZeroWithinVarianceError:
        return None, ZERO_VARIANCE_NOTICE
    except ValueError as exc:
        return None, f"ANOVA not applicable: {exc}"


def build_comparison(runs: list[RunReport]) -> ComparisonReport:
    """Summary rows plus ANOVA over per-image correctness and per-image total time."""
    if not runs:
        raise ReportError("a comparison needs at least one run")
    names = [r.pipeline for r in runs]
    if len(set(names)) != len(names):
        raise ReportError(f"duplicate pipeline names in comparison: {names}")
    acc_groups = [[1.0 if t.record.correct else 0.0 for t in r.records] for r in runs]
    time_groups = [[t.total_elapsed for t in r.records] for r in runs]
    anova_acc, acc_notice = _anova_or_notice(acc_groups)
    anova_time, time_notice = _anova_or_notice(time_groups)
    rows = [
        (r.pipeline, r.metrics.accuracy, r.metrics.precision, r.metrics.recall, r.metrics.f1)
        for r in runs
    ]
    return ComparisonReport(runs, anova_acc, acc_notice, anova_time, time_notice, rows)


# ------------------------------------------------------------------ table


def format_percent(value: float) -> str:
    return f"{100.0 * value:.2f}%"


def _summary_rows(report: Union[RunReport, ComparisonReport]):
    if isinstance(report, RunReport):
        m = report.metrics
        return [(report.pipeline, m.accuracy, m.precision, m.recall, m.f1)]
    return report.rows


def emit_summary_table(report: Union[RunReport, ComparisonReport]) -> tuple[str, str]:
    """Fixed-width text table with percentages, and its CSV twin with raw fractions."""
    rows = _summary_rows(report)
    if not rows:
        raise ReportError("nothing to tabulate")
    cells = [list(TABLE_COLUMNS)] + [[name] + [format_percent(v) for v in vals] for name, *vals in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]

    def line(row):
        first = row[0].ljust(widths[0])
        rest = [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        return " | ".join([first] + rest)

    sep = "-+-".join("-" * w for w in widths)
    text = "\n".join([line(cells[0]), sep] + [line(r) for r in cells[1:]]) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for name, *vals in rows:
        writer.writerow([name] + [repr(float(v)) for v in vals])
    return text, buf.getvalue()


# ------------------------------------------------------------------- json


def _stats_dict(s: RuntimeStats) -> dict[str, Any]:
    return {
        "n": s.n,
        "mean": s.mean,
        "median": s.median,
        "std": s.std,
        "gauss_mu": s.gauss_mu,
        "gauss_sigma": s.gauss_sigma,
        "histogram": {"edges": list(s.histogram.edges), "counts": list(s.histogram.counts)},
    }


def _record_dict(t: TimedRecord) -> dict[str, Any]:
    r = t.record
    return {
        "image": r.image_id,
        "truth": r.truth,
        "predicted": r.prediction.raw_text,
        "confidence": r.prediction.confidence,
        "correct": r.correct,
        "error": r.prediction.error,
        "timing": {
            "preprocess": r.preprocess_elapsed,
            "ocr": r.ocr_elapsed,
            "stages": [{"stage": s.stage, "elapsed": s.elapsed} for s in t.stages],
        },
    }


def run_to_dict(report: RunReport) -> dict[str, Any]:
    roc = None
    if report.roc is not None:
        roc = {"auc": report.roc.auc, "points": [list(p) for p in report.roc.points]}
    return {
        "schema": RUN_SCHEMA,
        "pipeline": report.pipeline,
        "backend": report.backend,
        "bins": report.bins,
        "records": [_record_dict(t) for t in report.records],
        "counts": asdict(report.counts),
        "metrics": asdict(report.metrics),
        "roc": roc,
        "roc_notice": report.roc_notice,
        "runtime": {k: _stats_dict(v) for k, v in report.runtime.items()},
    }


def comparison_to_dict(report: ComparisonReport) -> dict[str, Any]:
    return {
        "schema": COMPARISON_SCHEMA,
        "table": [dict(zip(CSV_HEADER, row)) for row in report.rows],
        "anova_accuracy": asdict(report.anova_accuracy) if report.anova_accuracy else None,
        "anova_accuracy_notice": report.anova_accuracy_notice,
        "anova_runtime": asdict(report.anova_runtime) if report.anova_runtime else None,
        "anova_runtime_notice": report.anova_runtime_notice,
        "runs": [run_to_dict(r) for r in report.runs],
    }


def report_to_dict(report: Union[RunReport, ComparisonReport]) -> dict[str, Any]:
    if isinstance(report, ComparisonReport):
        return comparison_to_dict(report)
    return run_to_dict(report)


def emit_json_report(report: Union[RunReport, ComparisonReport], path: Union[str, os.PathLike]) -> None:
    if isinstance(report, ComparisonReport) and not report.runs:
        raise ReportError("cannot emit an empty comparison")
    text = json.dumps(report_to_dict(report), indent=2, ensure_ascii=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _need(obj: dict, key: str, kind, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return float(value) if kind is float else value


def _record_from_dict(d: dict, where: str) -> TimedRecord:
    timing = _need(d, "timing", dict, where)
    stages = tuple(
        StageTiming(
            _need(s, "stage", str, f"{where}.timing.stages[{j}]"),
            _need(s, "elapsed", float, f"{where}.timing.stages[{j}]"),
        )
        for j, s in enumerate(_need(timing, "stages", list, f"{where}.timing"))
    )
    error = d.get("error")
    if error is not None and not isinstance(error, str):
        raise SchemaError(f"{where}.error: expected string or null")
    pred = Prediction(
        _need(d, "predicted", str, where),
        _need(d, "confidence", float, where),
        _need(timing, "ocr", float, f"{where}.timing"),
        error,
    )
    _need(d, "correct", bool, where)
    truth = _need(d, "truth", str, where)
    rec = EvalRecord(
        _need(d, "image", str, where),
        truth,
        pred,
        is_correct(truth, pred.raw_text),
        _need(timing, "preprocess", float, f"{where}.timing"),
        pred.elapsed,
    )
    return TimedRecord(rec, stages)


def run_from_dict(d: dict, where: str = "$") -> RunReport:
    """Rebuild a run from its records; stored summaries are ignored (see verify)."""
    if _need(d, "schema", str, where) != RUN_SCHEMA:
        raise SchemaError(f"{where}.schema: expected {RUN_SCHEMA!r}")
    records = [
        _record_from_dict(r, f"{where}.records[{i}]")
        for i, r in enumerate(_need(d, "records", list, where))
    ]
    bins = _need(d, "bins", int, where)
    try:
        return build_run_report(_need(d, "pipeline", str, where), _need(d, "backend", str, where), records, bins)
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def report_from_dict(d: dict) -> Union[RunReport, ComparisonReport]:
    try:
        schema = _need(d, "schema", str, "$")
        if schema == RUN_SCHEMA:
            return run_from_dict(d)
        if schema == COMPARISON_SCHEMA:
            runs = [run_from_dict(r, f"$.runs[{i}]") for i, r in enumerate(_need(d, "runs", list, "$"))]
            return build_comparison(runs)
    except (TypeError, AttributeError) as exc:
        raise SchemaError(f"malformed report: {exc}") from exc
    raise SchemaError(f"$.schema: unknown schema {schema!r}")


def load_report(path: Union[str, os.PathLike]) -> Union[RunReport, ComparisonReport]:
    with open(path, encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))


def first_difference(expected: Any, actual: Any, path: str = "$") -> Optional[str]:
    """JSON path of the first mismatch between two decoded documents, else None."""
    if isinstance(expected, dict) and isinstance(actual, dict):
        for key in list(expected) + [k for k in actual if k not in expected]:
            if key not in expected or key not in actual:
                return f"{path}.{key}"
            diff = first_difference(expected[key], actual[key], f"{path}.{key}")
            if diff:
                return diff
        return None
    if isinstance(expected, list) and isinstance(actual, list):
        if len(expected) != len(actual):
            return f"{path} (length {len(actual)} != {len(expected)})"
        for i, (e, a) in enumerate(zip(expected, actual)):
            diff = first_difference(e, a, f"{path}[{i}]")
            if diff:
                return diff
        return None
    if type(expected) is not type(actual) and not (
        isinstance(expected, (int, float)) and isinstance(actual, (int, float))
        and not isinstance(expected, bool) and not isinstance(actual, bool)
    ):
        return path
    return None if expected == actual else path


def verify_document(doc: dict) -> Optional[str]:
    """Recompute every summary from the records; return the first mismatching path."""
    rebuilt = report_to_dict(report_from_dict(doc))
    return first_difference(rebuilt, doc)


def verify_report(path: Union[str, os.PathLike]) -> Optional[str]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return verify_document(doc)


def strip_timing(obj: Any) -> Any:
    """Copy of a decoded report with wall-clock fields removed."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj
