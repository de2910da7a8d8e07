"""8-bit raster images and the binary PGM/PPM codec.

Only ``P5`` (gray) and ``P6`` (RGB) with maxval 255 are decoded natively.
Anything else (JPEG, PNG, ...) goes through :func:`ingest_convert`, which
shells out to a user-supplied converter that writes a PPM.
"""

from __future__ import annotations

import logging
import os
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

log = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

_WHITESPACE = b" \t\n\r\v\f"
_PLACEHOLDER = re.compile(r"\{in\}|\{out\}")


class ImageError(Exception):
    """Base class for image construction and codec failures."""


class UnreadableFileError(ImageError):
    pass


class UnsupportedFormatError(ImageError):
    pass


class UnsupportedMaxvalError(ImageError):
    pass


class PayloadLengthError(ImageError):
    """Sample data length disagrees with the header dimensions."""


class TruncatedDataError(PayloadLengthError):
    pass


class TrailingDataError(PayloadLengthError):
    pass


class ConverterConfigError(ValueError):
    pass


class ConverterError(ImageError):
    def __init__(self, message: str, returncode: int | None = None):
        super().__init__(message)
        self.returncode = returncode


@dataclass(frozen=True)
class Image:
    """Immutable row-major interleaved 8-bit raster with 1 or 3 channels."""

    width: int
    height: int
    channels: int
    samples: bytes

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ImageError(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        if self.channels not in (1, 3):
            raise ImageError(f"channels must be 1 or 3, got {self.channels}")
        if not isinstance(self.samples, bytes):
            object.__setattr__(self, "samples", bytes(self.samples))
        expected = self.width * self.height * self.channels
        if len(self.samples) != expected:
            raise PayloadLengthError(f"expected {expected} samples, got {len(self.samples)}")

    @classmethod
    def from_array(cls, array: np.ndarray) -> "Image":
        """Build an image from an ``(h, w)`` or ``(h, w, c)`` array.

        Values must already be integers in [0, 255]; nothing is rescaled.
        """
        arr = np.asarray(array)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ImageError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ImageError("sample values outside [0, 255]")
        h, w, c = arr.shape
        return cls(w, h, c, np.ascontiguousarray(arr, dtype=np.uint8).tobytes())

    def to_array(self) -> np.ndarray:
        """Read-only ``(height, width, channels)`` uint8 view of the samples."""
        return np.frombuffer(self.samples, dtype=np.uint8).reshape(
            self.height, self.width, self.channels
        )


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comments (comment runs to end of line).
    n = len(data)
    while pos < n:
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise UnsupportedFormatError("unexpected end of header")
    return data[start:pos], pos


def decode_netpbm(data: bytes) -> Image:
    """Decode a binary PGM/PPM byte string."""
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise UnsupportedFormatError(f"unsupported magic {magic!r}; expected P5 or P6")
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _read_token(data, pos)
        try:
            value = int(token)
        except ValueError:
            raise UnsupportedFormatError(f"malformed {name} {token!r}") from None
        fields.append(value)
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise UnsupportedFormatError(f"invalid dimensions {width}x{height}")
    # Exactly one whitespace byte separates the header from the raster.
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise TruncatedDataError("missing whitespace after maxval")
    payload = data[pos + 1 :]
    expected = width * height * channels
    if len(payload) < expected:
        raise TruncatedDataError(f"expected {expected} sample bytes, found {len(payload)}")
    if len(payload) > expected:
        raise TrailingDataError(
            f"expected {expected} sample bytes, found {len(payload)} (trailing data)"
        )
    return Image(width, height, channels, payload)


def encode_netpbm(image: Image) -> bytes:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    return header + image.samples


def load_image(path: PathLike) -> Image:
    """Load a binary PGM (P5) or PPM (P6) file with maxval 255."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    return decode_netpbm(data)


def save_image(image: Image, path: PathLike) -> None:
    """Write ``image`` as P5 (gray) or P6 (RGB). Raises OSError if unwritable."""
    Path(path).write_bytes(encode_netpbm(image))


@dataclass(frozen=True)
class CommandTemplate:
    """Command line with ``{in}``/``{out}`` placeholders substituted verbatim."""

    argv: tuple[str, ...]

    @classmethod
    def parse(cls, template: str, required: tuple[str, ...] = ("{in}", "{out}")) -> "CommandTemplate":
        try:
            argv = tuple(shlex.split(template))
        except ValueError as exc:
            raise ConverterConfigError(f"cannot parse command template: {exc}") from exc
        if not argv:
            raise ConverterConfigError("empty command template")
        joined = " ".join(argv)
        for token in required:
            if token not in joined:
                raise ConverterConfigError(f"command template lacks {token} placeholder")
        return cls(argv)

    def render(self, src: str, dst: str = "") -> list[str]:
        subst = {"{in}": src, "{out}": dst}
        return [_PLACEHOLDER.sub(lambda m: subst[m.group(0)], arg) for arg in self.argv]


def ingest_convert(
    path: PathLike,
    converter: Union[str, CommandTemplate],
    timeout: float | None = None,
) -> Image:
    """Convert ``path`` to PPM with an external command and decode the result.

    Args:
        path: Source image in any format the converter understands.
        converter: Command template, e.g. ``"convert {in} {out}"``.
        timeout: Optional limit in seconds for the converter process.

    Returns:
        The decoded image. The temporary PPM is removed afterwards.
    """
    if isinstance(converter, str):
        converter = CommandTemplate.parse(converter)
    with tempfile.TemporaryDirectory(prefix="platebench-") as tmp:
        out = os.path.join(tmp, "converted.ppm")
        argv = converter.render(os.fspath(path), out)
        log.debug("running converter %s", argv)
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ConverterError(f"converter failed to run: {exc}") from exc
        if proc.stderr:
            log.info("converter stderr: %s", proc.stderr.decode("utf-8", "replace").rstrip())
        if proc.returncode != 0:
            raise ConverterError(
                f"converter exited with status {proc.returncode}", proc.returncode
            )
        try:
            return load_image(out)
        except ImageError as exc:
            raise ConverterError(f"converter output is not a valid PPM/PGM: {exc}") from exc
