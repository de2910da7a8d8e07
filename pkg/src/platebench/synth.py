"""Deterministic synthetic Brazilian plates and controlled degradations."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from platebench.font import DIGITS, GLYPH_H, GLYPH_W, LETTERS, glyph
from platebench.imaging import Image, save_image
from platebench.metrics import PlateFormat
from platebench.rng import MASK64, SplitMix64

MANIFEST_NAME = "manifest.csv"


# Character classes per position: L = letter, D = digit.
FORMAT_LAYOUT = {
    PlateFormat.OLD_BRAZIL: "LLLDDDD",
    PlateFormat.MERCOSUL: "LLLDLDD",
}


@dataclass(frozen=True)
class PlateSpec:
    """How to render a plate.

    Each font cell is drawn as ``glyph_scale x glyph_scale`` blocks, characters
    are separated by one blank cell column, and ``padding`` pixels of
    background surround the text.
    """

    format: PlateFormat = PlateFormat.MERCOSUL
    glyph_scale: int = 3
    padding: int = 6
    foreground: tuple[int, int, int] = (50, 50, 50)
    background: tuple[int, int, int] = (190, 190, 190)

    def __post_init__(self) -> None:
        if self.format not in FORMAT_LAYOUT:
            raise ValueError(f"cannot generate plates of format {self.format}")
        if self.glyph_scale < 2:
            raise ValueError(f"glyph_scale must be >= 2, got {self.glyph_scale}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        for name in ("foreground", "background"):
            color = tuple(getattr(self, name))
            if len(color) != 3 or any(not 0 <= v <= 255 for v in color):
                raise ValueError(f"{name} must be an RGB triple in [0, 255], got {color}")
            object.__setattr__(self, name, color)
        if self.foreground == self.background:
            raise ValueError("foreground and background colors must differ")


@dataclass(frozen=True)
class PerturbParams:
    noise_sigma: float = 0.0
    brightness_slope: float = 0.0
    contrast: float = 1.0

    def __post_init__(self) -> None:
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 < self.contrast <= 1:
            raise ValueError(f"contrast must be in (0, 1], got {self.contrast}")

    @property
    def is_identity(self) -> bool:
        return self.noise_sigma == 0 and self.brightness_slope == 0 and self.contrast == 1


def random_plate_text(fmt: PlateFormat, rng: SplitMix64) -> str:
    pools = {"L": LETTERS, "D": DIGITS}
    return "".join(pools[k][rng.below(len(pools[k]))] for k in FORMAT_LAYOUT[fmt])


def render_text(text: str, spec: PlateSpec) -> Image:
    """Rasterize ``text`` with the embedded font on a flat background."""
    s, pad = spec.glyph_scale, spec.padding
    n = len(text)
    width = 2 * pad + (n * (GLYPH_W + 1) - 1) * s
    height = 2 * pad + GLYPH_H * s
    canvas = np.empty((height, width, 3), dtype=np.uint8)
    canvas[:] = spec.background
    block = np.ones((s, s), dtype=bool)
    for i, ch in enumerate(text):
        ink = np.kron(glyph(ch), block)
        x0 = pad + i * (GLYPH_W + 1) * s
        region = canvas[pad : pad + GLYPH_H * s, x0 : x0 + GLYPH_W * s]
        region[ink] = spec.foreground
    return Image.from_array(canvas)


def generate_plate(spec: PlateSpec, seed: int) -> tuple[Image, str]:
    """Random plate text for ``spec.format`` and its clean rendering."""
    rng = SplitMix64(seed)
    text = random_plate_text(spec.format, rng)
    return render_text(text, spec), text


def perturb(image: Image, params: PerturbParams, seed: int) -> Image:
    """Apply contrast about 128, a per-column brightness ramp and Gaussian noise.

    ``out = clamp(round((in - 128) * contrast + 128 + slope * x + N(0, sigma)))``
    with one normal draw per sample in row-major interleaved order.
    """
    if params.is_identity:
        return image
    arr = image.to_array().astype(np.float64)
    h, w, c = arr.shape
    x = np.arange(w, dtype=np.float64)[None, :, None]
    value = (arr - 128.0) * params.contrast + 128.0 + params.brightness_slope * x
    if params.noise_sigma > 0:
        noise = SplitMix64(seed).normal_block(h * w * c).reshape(h, w, c)
        value = value + params.noise_sigma * noise
    rounded = np.where(value >= 0, np.floor(value + 0.5), -np.floor(-value + 0.5))
    return Image.from_array(np.clip(rounded, 0, 255).astype(np.uint8))


def generate_dataset(
    count: int,
    spec: PlateSpec,
    params: PerturbParams,
    seed: int,
    out_dir: str | os.PathLike,
) -> Path:
    """Write ``count`` PPM plates plus ``manifest.csv``; image ``i`` uses seed ``seed + i``.

    Returns:
        Path of the manifest.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digits = max(4, len(str(count - 1)))
    rows = []
    for i in range(count):
        derived = (seed + i) & MASK64
        image, text = generate_plate(spec, derived)
        image = perturb(image, params, derived)
        name = f"plate_{i:0{digits}d}.ppm"
        save_image(image, out / name)
        rows.append((name, text))
    manifest = out / MANIFEST_NAME
    with manifest.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "plate"])
        writer.writerows(rows)
    return manifest
