import json
import re
import xml.etree.ElementTree as ET

import pytest

from platebench.metrics import EvalRecord
from platebench.ocr import Prediction
from platebench.plots import PLOT_H, PLOT_W, LEFT, TOP, histogram_svg, render_plots, roc_svg
from platebench.preprocess import StageTiming
from platebench.report import (
    CSV_HEADER,
    SINGLE_CLASS_NOTICE,
    TABLE_COLUMNS,
    ZERO_VARIANCE_NOTICE,
    ReportError,
    SchemaError,
    TimedRecord,
    build_comparison,
    build_run_report,
    emit_json_report,
    emit_summary_table,
    format_percent,
    load_report,
    report_to_dict,
    strip_timing,
    verify_document,
    verify_report,
)


def timed(i, truth, predicted, conf, pre=0.01, ocr=0.02, error=None):
    pred = Prediction(predicted, conf, ocr, error)
    rec = EvalRecord(f"img{i}", truth, pred, predicted == truth, pre, ocr)
    return TimedRecord(rec, (StageTiming("grayscale", pre),) if pre else ())


def mixed_run(name="none", n=8, wrong=(1, 4)):
    recs = []
    for i in range(n):
        bad = i in wrong
        recs.append(timed(i, "ABC1D23", "ABC1D24" if bad else "ABC1D23", 0.4 if bad else 0.9, 0.01 * (i + 1), 0.02 * (i % 3 + 1)))
    return build_run_report(name, "builtin", recs)


def test_format_percent():
    assert format_percent(0.7175) == "71.75%"
    assert format_percent(0.717) == "71.70%"
    assert format_percent(1.0) == "100.00%"


def test_table_header_and_csv():
    text, csv_text = emit_summary_table(mixed_run())
    header = [c.strip() for c in text.splitlines()[0].split("|")]
    assert header == list(TABLE_COLUMNS)
    assert csv_text.splitlines()[0] == ",".join(CSV_HEADER) == "preprocessing,accuracy,precision,recall,f1"
    assert len(text.splitlines()) == 3
    assert csv_text.splitlines()[1] == "none,0.75,0.75,0.75,0.75"


def test_four_arm_table_rows_equal_metrics():
    runs = [mixed_run(name, wrong=w) for name, w in [("none", (1,)), ("grayscale", (2, 3)), ("clahe", ()), ("bilateral", (0, 5, 7))]]
    text, _ = emit_summary_table(build_comparison(runs))
    rows = text.splitlines()[2:]
    assert [r.split("|")[0].strip() for r in rows] == ["none", "grayscale", "clahe", "bilateral"]
    for r in rows:
        cells = [c.strip() for c in r.split("|")[1:]]
        assert len(set(cells)) == 1


def test_json_roundtrip_and_verify(tmp_path):
    run = mixed_run()
    path = tmp_path / "r.json"
    emit_json_report(run, path)
    again = load_report(path)
    assert report_to_dict(again) == report_to_dict(run)
    assert verify_report(path) is None


def test_failure_reason_in_json(tmp_path):
    recs = [timed(0, "ABC1D23", "ABC1D23", 1.0), timed(1, "ABC1D23", "", 0.0, error="BackendTimeoutError: slow")]
    run = build_run_report("none", "external(x {in})", recs)
    emit_json_report(run, tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["records"][1]["error"] == "BackendTimeoutError: slow"
    assert doc["records"][0]["error"] is None
    assert len(run.failures) == 1


def test_empty_comparison_errors():
    with pytest.raises(ReportError):
        build_comparison([])


def test_duplicate_arms_rejected():
    with pytest.raises(ReportError):
        build_comparison([mixed_run("none"), mixed_run("none")])


def test_comparison_anova_and_notice():
    same = build_comparison([mixed_run("a", wrong=()), mixed_run("b", wrong=())])
    assert same.anova_accuracy is None and same.anova_accuracy_notice == ZERO_VARIANCE_NOTICE
    diff = build_comparison([mixed_run("a", wrong=(1,)), mixed_run("b", wrong=(1, 2, 3))])
    assert diff.anova_accuracy.f_value > 0


def test_single_class_notice():
    recs = [timed(i, "ABC1D23", "ABC1D23", 1.0 - i / 10) for i in range(3)]
    run = build_run_report("none", "builtin", recs)
    assert run.roc is None and run.roc_notice == SINGLE_CLASS_NOTICE
    assert SINGLE_CLASS_NOTICE in roc_svg(run)


def test_verify_detects_edit():
    doc = report_to_dict(mixed_run())
    doc = json.loads(json.dumps(doc))
    assert verify_document(doc) is None
    doc["metrics"]["f1"] = 0.5
    assert verify_document(doc) == "$.metrics.f1"
    doc = json.loads(json.dumps(report_to_dict(mixed_run())))
    doc["records"][0]["correct"] = False
    assert verify_document(doc) == "$.records[0].correct"


def test_verify_schema_errors():
    with pytest.raises(SchemaError):
        verify_document({"schema": "other/1"})
    doc = json.loads(json.dumps(report_to_dict(mixed_run())))
    del doc["records"][0]["truth"]
    with pytest.raises(SchemaError):
        verify_document(doc)


def test_strip_timing():
    doc = report_to_dict(mixed_run())
    stripped = strip_timing(doc)
    assert "runtime" not in stripped and "timing" not in stripped["records"][0]
    assert "metrics" in stripped


def _polyline_points(svg):
    m = re.search(r'<polyline points="([^"]+)"', svg)
    return [tuple(map(float, p.split(","))) for p in m.group(1).split()]


def _unit(px, py):
    return round((px - LEFT) / PLOT_W, 6), round(1 - (py - TOP) / PLOT_H, 6)


def test_roc_svg_perfect_geometry():
    recs = [timed(0, "ABC1D23", "ABC1D23", 0.9), timed(1, "ABC1D23", "ABC1D23", 0.8), timed(2, "ABC1D23", "XXX", 0.2)]
    run = build_run_report("none", "builtin", recs)
    assert run.roc.auc == 1.0
    svg = roc_svg(run)
    ET.fromstring(svg.split("\n", 1)[1])
    pts = {_unit(*p) for p in _polyline_points(svg)}
    assert {(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)} <= pts
    assert pts <= {(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (1.0, 1.0)}
    assert "AUC = 1.0000" in svg


def test_histogram_single_sample():
    run = build_run_report("none", "builtin", [timed(0, "ABC1D23", "ABC1D23", 1.0)])
    svg = histogram_svg(run)
    assert run.runtime["total"].histogram.counts == (1,)
    assert "sigma = 0" in svg and "<polyline" not in svg


def test_histogram_overlay_present():
    svg = histogram_svg(mixed_run())
    assert "<polyline" in svg


def test_render_plots_deterministic(tmp_path):
    report = build_comparison([mixed_run("none"), mixed_run("bilateral(radius=2)", wrong=(3,))])
    a = render_plots(report, tmp_path / "a")
    b = render_plots(report, tmp_path / "b")
    assert [p.name for p in a] == [p.name for p in b]
    assert {p.name for p in a} == {
        "00_none_roc.svg", "00_none_runtime_histogram.svg",
        "01_bilateral_radius_2_roc.svg", "01_bilateral_radius_2_runtime_histogram.svg",
        "mean_median.svg",
    }
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
        root = ET.fromstring(pa.read_text().split("\n", 1)[1])
        assert root.get("viewBox") == "0 0 800 600" and root.get("version") == "1.1"
