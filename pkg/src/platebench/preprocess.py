"""Preprocessing kernels (grayscale, per-channel CLAHE, bilateral) and pipelines.

All kernels are pure functions of ``(Image, params)`` and bit-deterministic:
integer arithmetic wherever the definition allows it, and a fixed summation
order where floating point is unavoidable (bilateral weights).

Rounding is half-away-from-zero followed by clamping to [0, 255].
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from platebench.imaging import Image

BINS = 256

# BT.601 luma weights in thousandths.
_LUMA = (299, 587, 114)


class PreprocessError(ValueError):
    pass


class ChannelError(PreprocessError):
    pass


class IncompatibleStagesError(PreprocessError):
    pass


class PipelineSyntaxError(PreprocessError):
    pass


class PipelineRangeError(PipelineSyntaxError):
    """A well-formed parameter whose value is outside its allowed range."""


def to_grayscale(image: Image) -> Image:
    """BT.601 luma, ``round(0.299 R + 0.587 G + 0.114 B)``, computed exactly."""
    if image.channels != 3:
        raise ChannelError(f"grayscale needs a 3-channel image, got {image.channels}")
    rgb = image.to_array().astype(np.int64)
    s = _LUMA[0] * rgb[..., 0] + _LUMA[1] * rgb[..., 1] + _LUMA[2] * rgb[..., 2]
    gray = (s + 500) // 1000
    return Image.from_array(np.clip(gray, 0, 255).astype(np.uint8))


# --------------------------------------------------------------------- CLAHE


@dataclass(frozen=True)
class ClaheParams:
    tiles_x: int = 8
    tiles_y: int = 8
    clip_limit: float = 2.0
    bins: int = BINS

    def __post_init__(self) -> None:
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise PreprocessError(f"tile counts must be >= 1, got {self.tiles_x}x{self.tiles_y}")
        if not (self.clip_limit >= 1.0) or math.isinf(self.clip_limit):
            raise PreprocessError(f"clip_limit must be a finite value >= 1.0, got {self.clip_limit}")
        if self.bins != BINS:
            raise PreprocessError("only 256 histogram bins are supported")


def tile_bounds(length: int, tiles: int) -> list[tuple[int, int]]:
    """Half-open tile extents along one axis; the last tile absorbs the remainder."""
    base = length // tiles
    edges = [t * base for t in range(tiles)] + [length]
    return [(edges[t], edges[t + 1]) for t in range(tiles)]


def clip_histogram(hist: np.ndarray, clip_limit: float) -> np.ndarray:
    """Clip bins and spread the excess over all bins in a single pass.

    The per-bin cap is ``floor(clip_limit * pixels / 256)`` (at least 1). The
    clipped excess is added evenly to every bin; the remainder of the integer
    division goes one count each to bins 0, 1, 2, ...
    """
    hist = np.asarray(hist, dtype=np.int64)
    total = int(hist.sum())
    limit = max(1, math.floor(clip_limit * total / BINS))
    excess = int(np.maximum(hist - limit, 0).sum())
    out = np.minimum(hist, limit)
    out += excess // BINS
    out[: excess % BINS] += 1
    return out


def equalization_map(hist: np.ndarray) -> np.ndarray:
    """256-entry lookup ``round(255 * (cdf - cdf_min) / (n - cdf_min))``.

    ``cdf_min`` is the CDF at the lowest occupied bin. A histogram with a
    single occupied level maps to the identity.
    """
    hist = np.asarray(hist, dtype=np.int64)
    cdf = np.cumsum(hist)
    total = int(cdf[-1])
    occupied = np.flatnonzero(hist)
    cdf_min = int(cdf[occupied[0]])
    den = total - cdf_min
    if den == 0:
        return np.arange(BINS, dtype=np.int64)
    num = np.maximum(255 * (cdf - cdf_min), 0)
    return np.minimum((2 * num + den) // (2 * den), 255)


def _axis_weights(length: int, bounds: list[tuple[int, int]]):
    """Per-coordinate neighbour tiles and integer interpolation weights.

    Centres are kept in doubled coordinates so half-pixel centres stay integral.
    The weight of the second tile is ``a / d``.
    """
    centres = [lo + hi - 1 for lo, hi in bounds]
    t0 = np.zeros(length, dtype=np.int64)
    t1 = np.zeros(length, dtype=np.int64)
    a = np.zeros(length, dtype=np.int64)
    d = np.ones(length, dtype=np.int64)
    last = len(centres) - 1
    for x in range(length):
        X = 2 * x
        if X <= centres[0]:
            continue
        if X >= centres[last]:
            t0[x] = t1[x] = last
            continue
        t = max(i for i in range(last) if centres[i] <= X)
        t0[x], t1[x] = t, t + 1
        a[x] = X - centres[t]
        d[x] = centres[t + 1] - centres[t]
    return t0, t1, a, d


def _clahe_channel(plane: np.ndarray, params: ClaheParams, xb, yb, xw, yw) -> np.ndarray:
    luts = np.empty((params.tiles_y, params.tiles_x, BINS), dtype=np.int64)
    for ty, (y0, y1) in enumerate(yb):
        for tx, (x0, x1) in enumerate(xb):
            hist = np.bincount(plane[y0:y1, x0:x1].ravel(), minlength=BINS)
            luts[ty, tx] = equalization_map(clip_histogram(hist, params.clip_limit))

    t0x, t1x, ax, dx = xw
    t0y, t1y, ay, dy = yw
    v = plane.astype(np.int64)
    m00 = luts[t0y[:, None], t0x[None, :], v]
    m01 = luts[t0y[:, None], t1x[None, :], v]
    m10 = luts[t1y[:, None], t0x[None, :], v]
    m11 = luts[t1y[:, None], t1x[None, :], v]
    wx1, wx0 = ax[None, :], (dx - ax)[None, :]
    wy1, wy0 = ay[:, None], (dy - ay)[:, None]
    num = wy0 * (wx0 * m00 + wx1 * m01) + wy1 * (wx0 * m10 + wx1 * m11)
    den = dy[:, None] * dx[None, :]
    return np.clip((2 * num + den) // (2 * den), 0, 255)


def clahe_rgb(image: Image, params: ClaheParams = ClaheParams()) -> Image:
    """Contrast-limited adaptive histogram equalization, each RGB channel separately.

    Args:
        image: 3-channel image.
        params: Tile grid and clip limit. The grid must fit inside the image.

    Returns:
        A new 3-channel image of the same size.
    """
    if image.channels != 3:
        raise ChannelError(f"clahe_rgb needs a 3-channel image, got {image.channels}")
    if params.tiles_x > image.width or params.tiles_y > image.height:
        raise PreprocessError(
            f"tile grid {params.tiles_x}x{params.tiles_y} larger than image "
            f"{image.width}x{image.height}"
        )
    arr = image.to_array()
    xb = tile_bounds(image.width, params.tiles_x)
    yb = tile_bounds(image.height, params.tiles_y)
    xw = _axis_weights(image.width, xb)
    yw = _axis_weights(image.height, yb)
    out = np.empty(arr.shape, dtype=np.uint8)
    for c in range(3):
        out[..., c] = _clahe_channel(arr[..., c], params, xb, yb, xw, yw)
    return Image.from_array(out)


# ----------------------------------------------------------------- bilateral


@dataclass(frozen=True)
class BilateralParams:
    radius: int = 4
    sigma_space: float = 75.0
    sigma_range: float = 75.0

    def __post_init__(self) -> None:
        if int(self.radius) != self.radius or self.radius < 1:
            raise PreprocessError(f"radius must be an integer >= 1, got {self.radius}")
        for name in ("sigma_space", "sigma_range"):
            value = getattr(self, name)
            if not (value > 0) or math.isinf(value):
                raise PreprocessError(f"{name} must be finite and > 0, got {value}")


def bilateral_filter(image: Image, params: BilateralParams = BilateralParams()) -> Image:
    """Edge-preserving bilateral smoothing, channel by channel.

    The window is ``(2r+1)^2`` clipped to the image (no padding). The range
    weight compares samples of the same channel only. Offsets are accumulated
    in row-major window order so the result equals a per-pixel double loop.
    """
    r = int(params.radius)
    ss2 = 2.0 * params.sigma_space * params.sigma_space
    sr2 = 2.0 * params.sigma_range * params.sigma_range
    range_lut = np.array([math.exp(-(d * d) / sr2) for d in range(BINS)])

    arr = image.to_array().astype(np.int64)
    h, w, _ = arr.shape
    padded = np.zeros((h + 2 * r, w + 2 * r, arr.shape[2]), dtype=np.int64)
    padded[r : r + h, r : r + w] = arr
    inside = np.zeros((h + 2 * r, w + 2 * r, 1), dtype=bool)
    inside[r : r + h, r : r + w] = True

    num = np.zeros(arr.shape, dtype=np.float64)
    den = np.zeros(arr.shape, dtype=np.float64)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            spatial = math.exp(-(dy * dy + dx * dx) / ss2)
            q = padded[r + dy : r + dy + h, r + dx : r + dx + w]
            valid = inside[r + dy : r + dy + h, r + dx : r + dx + w]
            weight = np.where(valid, spatial * range_lut[np.abs(q - arr)], 0.0)
            num += weight * q
            den += weight
    out = np.clip(np.floor(num / den + 0.5), 0, 255).astype(np.uint8)
    return Image.from_array(out)


# ------------------------------------------------------------------ pipeline


@dataclass(frozen=True)
class GrayscaleStage:
    name = "grayscale"
    rgb_only = True

    def apply(self, image: Image) -> Image:
        return to_grayscale(image)

    def text(self) -> str:
        return "grayscale"


@dataclass(frozen=True)
class ClaheStage:
    params: ClaheParams = ClaheParams()
    name = "clahe_rgb"
    rgb_only = True

    def apply(self, image: Image) -> Image:
        return clahe_rgb(image, self.params)

    def text(self) -> str:
        p = self.params
        return f"clahe_rgb(tiles={p.tiles_x}x{p.tiles_y},clip={p.clip_limit:g})"


@dataclass(frozen=True)
class BilateralStage:
    params: BilateralParams = BilateralParams()
    name = "bilateral"
    rgb_only = False

    def apply(self, image: Image) -> Image:
        return bilateral_filter(image, self.params)

    def text(self) -> str:
        p = self.params
        return f"bilateral(radius={p.radius},sspace={p.sigma_space:g},srange={p.sigma_range:g})"


Stage = Union[GrayscaleStage, ClaheStage, BilateralStage]


def render_stages(stages) -> str:
    return "|".join(s.text() for s in stages) if stages else "none"


@dataclass(frozen=True)
class PipelineSpec:
    """One experimental arm: an ordered tuple of stages. Empty means no preprocessing."""

    name: str
    stages: tuple = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        seen_gray = False
        for stage in self.stages:
            if not isinstance(stage, (GrayscaleStage, ClaheStage, BilateralStage)):
                raise PipelineSyntaxError(f"unknown stage {stage!r}")
            if seen_gray and stage.rgb_only:
                raise IncompatibleStagesError(
                    f"stage {stage.name!r} needs RGB input but follows grayscale"
                )
            if isinstance(stage, GrayscaleStage):
                seen_gray = True

    @classmethod
    def of(cls, *stages: Stage) -> "PipelineSpec":
        return cls(render_stages(stages), stages)

    def text(self) -> str:
        return render_stages(self.stages)


@dataclass(frozen=True)
class StageTiming:
    stage: str
    elapsed: float


def apply_pipeline(image: Image, spec: PipelineSpec) -> tuple[Image, list[StageTiming]]:
    """Run the stages in order, timing each with ``time.perf_counter``."""
    timings: list[StageTiming] = []
    for stage in spec.stages:
        start = time.perf_counter()
        image = stage.apply(image)
        timings.append(StageTiming(stage.name, max(0.0, time.perf_counter() - start)))
    return image, timings


_STAGE_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$", re.S)


def _param_dict(stage: str, body: str | None, allowed: set[str]) -> dict[str, str]:
    if body is None or not body.strip():
        return {}
    out: dict[str, str] = {}
    for item in body.split(","):
        key, eq, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key or not value:
            raise PipelineSyntaxError(f"malformed parameter {item.strip()!r} in {stage}")
        if key not in allowed:
            raise PipelineSyntaxError(f"unknown parameter {key!r} for {stage}")
        if key in out:
            raise PipelineSyntaxError(f"duplicate parameter {key!r} for {stage}")
        out[key] = value
    return out


def _number(stage: str, key: str, value: str, kind=float):
    try:
        return kind(value)
    except ValueError:
        raise PipelineSyntaxError(f"malformed value {value!r} for {stage}.{key}") from None


def _parse_stage(text: str) -> Stage:
    m = _STAGE_RE.match(text)
    if not m:
        raise PipelineSyntaxError(f"malformed stage {text.strip()!r}")
    name, body = m.group(1), m.group(2)
    try:
        if name == "grayscale":
            _param_dict(name, body, set())
            return GrayscaleStage()
        if name == "clahe_rgb":
            p = _param_dict(name, body, {"tiles", "clip"})
            tx = ty = 8
            if "tiles" in p:
                parts = p["tiles"].lower().split("x")
                if len(parts) == 1:
                    parts = parts * 2
                if len(parts) != 2:
                    raise PipelineSyntaxError(f"malformed tiles {p['tiles']!r}; expected NxM")
                tx, ty = (_number(name, "tiles", s, int) for s in parts)
            clip = _number(name, "clip", p["clip"]) if "clip" in p else 2.0
            return ClaheStage(ClaheParams(tx, ty, clip))
        if name == "bilateral":
            p = _param_dict(name, body, {"radius", "sspace", "srange"})
            radius = _number(name, "radius", p["radius"], int) if "radius" in p else 4
            ss = _number(name, "sspace", p["sspace"]) if "sspace" in p else 75.0
            sr = _number(name, "srange", p["srange"]) if "srange" in p else 75.0
            return BilateralStage(BilateralParams(radius, ss, sr))
    except PipelineSyntaxError:
        raise
    except PreprocessError as exc:
        raise PipelineRangeError(f"out-of-range value in {name}: {exc}") from exc
    raise PipelineSyntaxError(f"unknown stage {name!r}")


def parse_pipeline(text: str) -> PipelineSpec:
    """Parse ``stage(k=v,...)|stage...`` into a spec named by its canonical text.

    ``""`` and ``"none"`` give the empty baseline pipeline.
    """
    if text.strip() in ("", "none"):
        return PipelineSpec("none", ())
    stages = [_parse_stage(part) for part in text.split("|")]
    return PipelineSpec(render_stages(stages), tuple(stages))
