"""``platebench`` command line: synth, run, compare, report, verify.

Exit codes: 0 success, 1 usage or configuration error, 2 run completed but
some images failed (unreadable image, preprocessing or backend failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from platebench.imaging import CommandTemplate, ConverterConfigError, ImageError, ingest_convert, load_image
from platebench.metrics import EmptyPlateError, EvalRecord, PlateFormat, is_correct, normalize_plate
from platebench.ocr import DEFAULT_TIMEOUT, Prediction, Recognizer, RecognizerConfig
from platebench.plots import _slug, render_plots
from platebench.preprocess import PipelineSpec, PreprocessError, apply_pipeline, parse_pipeline
from platebench.report import (
    ComparisonReport,
    ReportError,
    RunReport,
    SchemaError,
    TimedRecord,
    build_comparison,
    build_run_report,
    emit_json_report,
    emit_summary_table,
    load_report,
    verify_report,
)
from platebench.synth import PerturbParams, PlateSpec, generate_dataset

log = logging.getLogger("platebench")

EXIT_OK, EXIT_USAGE, EXIT_FAILURES = 0, 1, 2
NATIVE_SUFFIXES = {".ppm", ".pgm", ".pnm"}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ManifestRow:
    image: str
    path: Path
    plate: str


@dataclass(frozen=True)
class RunConfig:
    manifest: Path
    backend: RecognizerConfig
    workers: int = 1
    out: Optional[Path] = None
    bins: int = 10
    converter: Optional[str] = None

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise UsageError(f"--workers must be >= 1, got {self.workers}")
        if self.bins < 1:
            raise UsageError(f"--bins must be >= 1, got {self.bins}")
        if not Path(self.manifest).is_file():
            raise UsageError(f"manifest not found: {self.manifest}")


def read_manifest(path: Path) -> list[ManifestRow]:
    base = path.parent
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image", "plate"]:
            raise UsageError(f"{path}: header must be exactly 'image,plate', got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise UsageError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                plate = normalize_plate(row[1])
            except EmptyPlateError:
                raise UsageError(f"{path}:{lineno}: empty plate text") from None
            rows.append(ManifestRow(row[0], base / row[0], plate))
    if not rows:
        raise UsageError(f"{path}: manifest has no rows")
    return rows


def _load(row: ManifestRow, converter: Optional[CommandTemplate]):
    if converter is not None and row.path.suffix.lower() not in NATIVE_SUFFIXES:
        return ingest_convert(row.path, converter)
    return load_image(row.path)


def process_image(
    index: int,
    row: ManifestRow,
    pipeline: PipelineSpec,
    recognizer: Recognizer,
    converter: Optional[CommandTemplate] = None,
) -> TimedRecord:
    """Load, preprocess and recognize one manifest row; failures become scored records."""
    try:
        image = _load(row, converter)
        image, timings = apply_pipeline(image, pipeline)
    except (ImageError, PreprocessError) as exc:
        log.warning("image %s: %s", row.image, exc)
        pred = Prediction.failure(f"{type(exc).__name__}: {exc}")
        return TimedRecord(EvalRecord(row.image, row.plate, pred, False, 0.0, 0.0))
    pred = recognizer.recognize(image, truth_hint=row.plate, index=index)
    pre = sum(t.elapsed for t in timings)
    rec = EvalRecord(row.image, row.plate, pred, is_correct(row.plate, pred.raw_text), pre, pred.elapsed)
    return TimedRecord(rec, tuple(timings))


def run_pipeline(config: RunConfig, pipeline: PipelineSpec, rows: Optional[list[ManifestRow]] = None) -> RunReport:
    """Evaluate one arm over the manifest; results keep manifest order for any worker count."""
    rows = rows if rows is not None else read_manifest(Path(config.manifest))
    recognizer = Recognizer(config.backend)
    converter = CommandTemplate.parse(config.converter) if config.converter else None

    def work(item):
        i, row = item
        return process_image(i, row, pipeline, recognizer, converter)

    if config.workers == 1:
        records = [work(item) for item in enumerate(rows)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(work, enumerate(rows)))
    return build_run_report(pipeline.name, config.backend.describe(), records, config.bins)


def write_outputs(report, out: Path, json_name: str) -> str:
    out.mkdir(parents=True, exist_ok=True)
    emit_json_report(report, out / json_name)
    text, csv_text = emit_summary_table(report)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    (out / "summary.csv").write_text(csv_text, encoding="utf-8")
    render_plots(report, out)
    return text


def _describe_run(run: RunReport) -> str:
    lines = []
    if run.roc is not None:
        lines.append(f"{run.pipeline}: AUC = {run.roc.auc:.4f}")
    else:
        lines.append(f"{run.pipeline}: {run.roc_notice}")
    total = run.runtime["total"]
    lines.append(f"{run.pipeline}: time per image mean {total.mean:.4f} s, median {total.median:.4f} s")
    if run.failures:
        lines.append(f"{run.pipeline}: {len(run.failures)} image(s) failed")
    return "\n".join(lines)


def _describe_anova(label: str, result, notice: Optional[str]) -> str:
    if result is None:
        return f"ANOVA ({label}): {notice}"
    return (
        f"ANOVA ({label}): F({result.df_between}, {result.df_within}) = {result.f_value:.4f}, "
        f"p = {result.p_value:.4g}"
    )


# --------------------------------------------------------------- commands


def cmd_run(config: RunConfig, pipeline_text: str) -> tuple[RunReport, int]:
    pipeline = parse_pipeline(pipeline_text)
    report = run_pipeline(config, pipeline)
    out = config.out or Path(".")
    text = write_outputs(report, out, "report.json")
    print(text, end="")
    print(_describe_run(report))
    return report, EXIT_FAILURES if report.failures else EXIT_OK


def cmd_compare(config: RunConfig, pipeline_texts: Sequence[str]) -> tuple[ComparisonReport, int]:
    if len(pipeline_texts) < 2:
        raise UsageError("compare needs at least two --pipeline arms")
    pipelines = [parse_pipeline(t) for t in pipeline_texts]
    names = [p.name for p in pipelines]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise UsageError(f"duplicate pipelines: {', '.join(dupes)}")
    rows = read_manifest(Path(config.manifest))
    runs = [run_pipeline(config, p, rows) for p in pipelines]
    report = build_comparison(runs)
    out = config.out or Path(".")
    text = write_outputs(report, out, "comparison.json")
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    for i, run in enumerate(runs):
        emit_json_report(run, runs_dir / f"{i:02d}_{_slug(run.pipeline)}.json")
    print(text, end="")
    for run in runs:
        print(_describe_run(run))
    print(_describe_anova("accuracy", report.anova_accuracy, report.anova_accuracy_notice))
    print(_describe_anova("runtime", report.anova_runtime, report.anova_runtime_notice))
    failed = any(run.failures for run in runs)
    return report, EXIT_FAILURES if failed else EXIT_OK


def cmd_synth(
    count: int,
    fmt: PlateFormat,
    perturb_params: PerturbParams,
    seed: int,
    out_dir: Path,
    spec_overrides: Optional[dict] = None,
) -> Path:
    if count < 1:
        raise UsageError(f"--count must be >= 1, got {count}")
    try:
        spec = PlateSpec(format=fmt, **(spec_overrides or {}))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    manifest = generate_dataset(count, spec, perturb_params, seed, out_dir)
    print(manifest)
    return manifest


def cmd_verify(path: Path) -> int:
    if not Path(path).is_file():
        print(f"verify: report not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        diff = verify_report(path)
    except json.JSONDecodeError as exc:
        print(f"verify: not valid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"verify: schema mismatch: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if diff is not None:
        print(f"verify: mismatch at {diff}", file=sys.stderr)
        return EXIT_USAGE
    print(f"verify: {path}: OK")
    return EXIT_OK


def cmd_report(path: Path, out: Path) -> int:
    report = load_report(path)
    text, csv_text = emit_summary_table(report)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    (out / "summary.csv").write_text(csv_text, encoding="utf-8")
    render_plots(report, out)
    print(text, end="")
    return EXIT_OK


# ------------------------------------------------------------------ argv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_backend_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--backend", choices=("mock", "builtin", "external"), default="builtin")
    p.add_argument("--backend-cmd", help='external backend command, e.g. "python ocr.py {in}"')
    p.add_argument("--error-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timeout-secs", type=float, default=DEFAULT_TIMEOUT)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--converter", help='converter for non-PPM inputs, e.g. "convert {in} {out}"')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="platebench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic plate dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--format", default="mercosul", help="mercosul or oldbrazil")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma")
    p.add_argument("--slope", type=float, default=0.0, help="brightness change per column")
    p.add_argument("--contrast", type=float, default=1.0)
    p.add_argument("--scale", type=int, default=3, help="pixels per font cell")
    p.add_argument("--padding", type=int, default=6)

    p = sub.add_parser("run", help="evaluate one pipeline")
    _add_backend_args(p)
    p.add_argument("--pipeline", default="")

    p = sub.add_parser("compare", help="evaluate several pipelines on the same data")
    _add_backend_args(p)
    p.add_argument("--pipeline", action="append", default=[], help="repeat once per arm")

    p = sub.add_parser("report", help="re-render table and plots from a JSON report")
    p.add_argument("report", type=Path)
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("verify", help="recompute a JSON report and compare")
    p.add_argument("report", type=Path)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("PLATEBENCH_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _run_config(args) -> RunConfig:
    if args.backend == "mock" and args.seed is None:
        raise UsageError("--seed is required for the mock backend")
    if args.backend == "external" and not args.backend_cmd:
        raise UsageError("--backend-cmd is required for the external backend")
    try:
        backend = RecognizerConfig(
            kind=args.backend,
            command=args.backend_cmd,
            error_rate=args.error_rate,
            seed=args.seed,
            timeout=args.timeout_secs,
        )
    except (ValueError, ConverterConfigError) as exc:
        raise UsageError(f"backend misconfigured: {exc}") from exc
    if args.converter:
        try:
            CommandTemplate.parse(args.converter)
        except ConverterConfigError as exc:
            raise UsageError(f"--converter: {exc}") from exc
    return RunConfig(args.manifest, backend, args.workers, args.out, args.bins, args.converter)


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            if args.seed is None:
                raise UsageError("--seed is required for synth")
            try:
                fmt = PlateFormat.parse(args.format)
                params = PerturbParams(args.noise, args.slope, args.contrast)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            cmd_synth(
                args.count, fmt, params, args.seed, args.out,
                {"glyph_scale": args.scale, "padding": args.padding},
            )
            return EXIT_OK
        if args.command == "run":
            return cmd_run(_run_config(args), args.pipeline)[1]
        if args.command == "compare":
            return cmd_compare(_run_config(args), args.pipeline)[1]
        if args.command == "report":
            return cmd_report(args.report, args.out)
        if args.command == "verify":
            return cmd_verify(args.report)
    except (UsageError, PreprocessError, ReportError, ValueError) as exc:
        print(f"platebench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"platebench: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
