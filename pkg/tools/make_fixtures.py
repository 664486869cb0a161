"""Regenerate the natural test images in tests/data/ (needs scikit-image).

Each image is converted to 8-bit grayscale and reduced to 256x256 by 2x2
averaging of a 512x512 crop.
"""

from pathlib import Path

import numpy as np
from skimage import data
from skimage.color import rgb2gray

from qdcs.formats import write_pgm

OUT = Path(__file__).resolve().parents[1] / "tests" / "data"


def gray512(img):
    img = np.asarray(img)
    if img.ndim == 3:
        img = rgb2gray(img[..., :3]) * 255.0
    return img.astype(float)[:512, :512]


def reduce(img):
    return np.clip(np.rint(img.reshape(256, 2, 256, 2).mean(axis=(1, 3))), 0, 255).astype(np.uint8)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name in ("camera", "astronaut"):
        write_pgm(OUT / f"{name}256.pgm", reduce(gray512(getattr(data, name)())))
        print("wrote", name)


if __name__ == "__main__":
    main()
