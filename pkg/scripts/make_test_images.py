#!/usr/bin/env python3
"""Regenerate the bundled test imagery in data/.

The two natural images come from scikit-image's public-domain sample data
(converted to a single luminance plane); the gradient is synthetic.  The
PGM files are committed, so this script is only needed to rebuild them.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from jfdkit import GrayImage, write_pgm  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "data"


def luminance(rgb: np.ndarray) -> np.ndarray:
    weights = np.array([0.299, 0.587, 0.114])
    return np.round(rgb @ weights).clip(0, 255).astype(np.uint8)


def gradient(size: int = 512) -> np.ndarray:
    ramp = np.arange(size, dtype=np.float64)
    diag = (ramp[:, None] + ramp[None, :]) * 255.0 / (2 * (size - 1))
    return np.round(diag).astype(np.uint8)


def main() -> None:
    import skimage.data

    DATA.mkdir(exist_ok=True)
    write_pgm(GrayImage(luminance(skimage.data.immunohistochemistry())), DATA / "tissue.pgm")
    write_pgm(GrayImage(skimage.data.gravel()), DATA / "gravel.pgm")
    write_pgm(GrayImage(gradient()), DATA / "gradient.pgm")
    for name in ("tissue.pgm", "gravel.pgm", "gradient.pgm"):
        print("wrote", DATA / name)


if __name__ == "__main__":
    main()
