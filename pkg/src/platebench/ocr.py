"""Recognizer backends: external process, deterministic mock, built-in matcher.

The external backend speaks a one-line JSON protocol. The command template
gets the path of a temporary PPM substituted for ``{in}``; the process must
print exactly one line ``{"text": "...", "confidence": 0.93}`` to stdout.
"""

from __future__ import annotations

import json
import logging
import math
import os
import subprocess
import tempfile
import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from platebench.font import ALPHABET, GLYPH_H, GLYPH_W, GLYPHS
from platebench.imaging import CommandTemplate, Image, save_image
from platebench.preprocess import to_grayscale
from platebench.rng import SplitMix64, derive_seed

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0
_TEMPLATE_CELLS = GLYPH_W * GLYPH_H
_TEMPLATES = np.stack([GLYPHS[ch] for ch in ALPHABET])


class BackendError(Exception):
    """A recognizer failed on one image."""


class BackendExitError(BackendError):
    def __init__(self, message: str, returncode: int):
        super().__init__(message)
        self.returncode = returncode


class BackendTimeoutError(BackendError):
    pass


class ProtocolError(BackendError):
    pass


@dataclass(frozen=True)
class Prediction:
    raw_text: str
    confidence: float
    elapsed: float = 0.0
    error: Optional[str] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.elapsed < 0:
            raise ValueError(f"elapsed must be >= 0, got {self.elapsed}")

    @classmethod
    def failure(cls, reason: str, elapsed: float = 0.0) -> "Prediction":
        return cls("", 0.0, elapsed, reason)


# ------------------------------------------------------------------- mock


def mock_recognize(truth: str, error_rate: float, seed: int, image_index: int) -> Prediction:
    """Echo ``truth``, corrupting one character with probability ``error_rate``.

    Draws come from a stream keyed on ``(seed, image_index)``: one uniform for
    the corrupt/keep decision, one for the jitter, then (when corrupting) one
    for the position and one for the replacement. Confidence sits 0.05*jitter
    above ``1 - error_rate`` for echoed plates and below it for corrupted ones.
    """
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError(f"error_rate must be in [0, 1], got {error_rate}")
    rng = SplitMix64(derive_seed(seed, image_index))
    corrupt = rng.uniform() < error_rate
    jitter = 0.05 * rng.uniform()
    text = truth
    if corrupt and truth:
        pos = rng.below(len(truth))
        choices = [ch for ch in ALPHABET if ch != truth[pos]]
        text = truth[:pos] + choices[rng.below(len(choices))] + truth[pos + 1 :]
    base = 1.0 - error_rate
    confidence = base - jitter if corrupt else base + jitter
    return Prediction(text, min(1.0, max(0.0, confidence)))


# ---------------------------------------------------------------- builtin


def otsu_threshold(hist) -> Optional[int]:
    """Threshold ``t`` maximizing between-class variance for classes ``<= t`` / ``> t``.

    Exact integer comparison; the lowest maximizing ``t`` wins. Returns None
    when every pixel has the same value.
    """
    hist = [int(v) for v in hist]
    n = sum(hist)
    total = sum(i * c for i, c in enumerate(hist))
    best_t, best = None, None
    n0 = s0 = 0
    for t in range(len(hist) - 1):
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        # w0 w1 (mu0 - mu1)^2 is proportional to (s0 n - total n0)^2 / (n0 n1).
        num = (s0 * n - total * n0) ** 2
        den = n0 * n1
        if best is None or num * best[1] > best[0] * den:
            best_t, best = t, (num, den)
    return best_t


def binarize(gray: np.ndarray) -> np.ndarray:
    """Otsu ink mask; ink is the smaller class (the darker one on a tie)."""
    t = otsu_threshold(np.bincount(gray.ravel(), minlength=256))
    if t is None:
        return np.zeros(gray.shape, dtype=bool)
    dark = gray <= t
    n_dark = int(dark.sum())
    return dark if n_dark * 2 <= dark.size else ~dark


def segment_columns(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open column spans separated by columns containing no ink."""
    occupied = mask.any(axis=0)
    spans, start = [], None
    for x, ink in enumerate(occupied):
        if ink and start is None:
            start = x
        elif not ink and start is not None:
            spans.append((start, x))
            start = None
    if start is not None:
        spans.append((start, len(occupied)))
    return spans


def resample_cell(mask: np.ndarray) -> np.ndarray:
    """Crop to the ink bounding box and reduce to 5x7 by strict block majority."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    box = mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    h, w = box.shape
    cell = np.zeros((GLYPH_H, GLYPH_W), dtype=bool)
    for r in range(GLYPH_H):
        y0, y1 = r * h // GLYPH_H, (r + 1) * h // GLYPH_H
        for c in range(GLYPH_W):
            x0, x1 = c * w // GLYPH_W, (c + 1) * w // GLYPH_W
            block = box[y0:y1, x0:x1]
            cell[r, c] = block.size > 0 and 2 * int(block.sum()) > block.size
    return cell


def match_glyph(cell: np.ndarray) -> tuple[str, int]:
    """Nearest template by Hamming distance; ties go to the earlier ALPHABET entry."""
    distances = (_TEMPLATES != cell[None]).sum(axis=(1, 2))
    idx = int(np.argmin(distances))
    return ALPHABET[idx], int(distances[idx])


def builtin_recognize(image: Image) -> Prediction:
    """Template-matching recognizer for plates rendered with the embedded font."""
    gray = to_grayscale(image) if image.channels == 3 else image
    mask = binarize(gray.to_array()[..., 0])
    spans = segment_columns(mask)
    if not spans:
        return Prediction("", 0.0)
    chars, dists = [], []
    for x0, x1 in spans:
        ch, dist = match_glyph(resample_cell(mask[:, x0:x1]))
        chars.append(ch)
        dists.append(dist / _TEMPLATE_CELLS)
    return Prediction("".join(chars), 1.0 - sum(dists) / len(dists))


# --------------------------------------------------------------- external


def parse_backend_line(stdout: bytes) -> tuple[str, float]:
    """Validate one protocol response and return ``(text, confidence)``."""
    try:
        out = stdout.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"backend output is not UTF-8: {exc}") from exc
    if not out.endswith("\n") or out.count("\n") != 1:
        lines = len(out.splitlines())
        raise ProtocolError(f"expected exactly one newline-terminated line, got {lines} line(s)")
    try:
        obj = json.loads(out)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("response must be a JSON object")
    for key in ("text", "confidence"):
        if key not in obj:
            raise ProtocolError(f"response lacks required key {key!r}")
    text, conf = obj["text"], obj["confidence"]
    if not isinstance(text, str):
        raise ProtocolError("'text' must be a string")
    if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not math.isfinite(conf):
        raise ProtocolError("'confidence' must be a number")
    if not 0.0 <= conf <= 1.0:
        raise ProtocolError(f"'confidence' {conf} outside [0, 1]")
    return text, float(conf)


def external_recognize(
    image: Image,
    command: Union[str, CommandTemplate],
    timeout: float = DEFAULT_TIMEOUT,
) -> Prediction:
    """Run an out-of-process OCR engine on ``image``.

    Raises:
        BackendExitError: nonzero exit status.
        BackendTimeoutError: the process outlived ``timeout`` seconds.
        ProtocolError: stdout was not one valid JSON response line.
    """
    if isinstance(command, str):
        command = CommandTemplate.parse(command, required=("{in}",))
    with tempfile.TemporaryDirectory(prefix="platebench-ocr-") as tmp:
        path = os.path.join(tmp, "input.ppm")
        save_image(image, path)
        argv = command.render(path)
        start = time.perf_counter()
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            raise BackendTimeoutError(f"backend timed out after {timeout:g} s") from exc
        except OSError as exc:
            raise BackendExitError(f"cannot start backend: {exc}", -1) from exc
        elapsed = time.perf_counter() - start
    if proc.stderr:
        log.info("backend stderr: %s", proc.stderr.decode("utf-8", "replace").rstrip())
    if proc.returncode != 0:
        raise BackendExitError(f"backend exited with status {proc.returncode}", proc.returncode)
    text, conf = parse_backend_line(proc.stdout)
    return Prediction(text, conf, elapsed)


# ------------------------------------------------------------ dispatching


@dataclass(frozen=True)
class RecognizerConfig:
    kind: str
    command: Optional[str] = None
    error_rate: float = 0.0
    seed: Optional[int] = None
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if self.kind not in ("external", "mock", "builtin"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "external":
            if not self.command:
                raise ValueError("external backend needs a command template")
            CommandTemplate.parse(self.command, required=("{in}",))
        if self.kind == "mock":
            if self.seed is None:
                raise ValueError("mock backend needs an explicit seed")
            if not 0.0 <= self.error_rate <= 1.0:
                raise ValueError(f"error_rate must be in [0, 1], got {self.error_rate}")
        if not self.timeout > 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")

    def describe(self) -> str:
        if self.kind == "mock":
            return f"mock(error_rate={self.error_rate:g},seed={self.seed})"
        if self.kind == "external":
            return f"external({self.command})"
        return "builtin"


class Recognizer:
    """Uniform front end over the three backends.

    :meth:`recognize` never raises for per-image backend failures; it returns
    a failed :class:`Prediction` carrying the reason instead.
    """

    def __init__(self, config: RecognizerConfig):
        self.config = config
        self._command = (
            CommandTemplate.parse(config.command, required=("{in}",))
            if config.kind == "external"
            else None
        )

    def _invoke(self, image: Image, truth_hint: Optional[str], index: int) -> Prediction:
        cfg = self.config
        if cfg.kind == "mock":
            if truth_hint is None:
                raise BackendError("mock backend needs the ground-truth hint")
            return mock_recognize(truth_hint, cfg.error_rate, cfg.seed, index)
        if cfg.kind == "builtin":
            return builtin_recognize(image)
        return external_recognize(image, self._command, cfg.timeout)

    def recognize(self, image: Image, truth_hint: Optional[str] = None, index: int = 0) -> Prediction:
        start = time.perf_counter()
        try:
            pred = self._invoke(image, truth_hint, index)
        except BackendError as exc:
            elapsed = time.perf_counter() - start
            log.warning("image %d: backend failure: %s", index, exc)
            return Prediction.failure(f"{type(exc).__name__}: {exc}", elapsed)
        elapsed = time.perf_counter() - start
        return Prediction(pred.raw_text, pred.confidence, elapsed)
