"""Benchmark toolkit for license-plate OCR preprocessing pipelines."""

from platebench.imaging import Image, load_image, save_image

__all__ = ["Image", "load_image", "save_image"]
__version__ = "0.1.0"
