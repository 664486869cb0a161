"""Image-level encoder: the full keyed sensing pipeline and its split form.

``encode_image`` runs pre-randomization, block transform, down-sampling,
3-sigma normalization and joint quantization/diffusion.  The same work can
be split between a data owner (``randomize_image``: permutation only) and a
service provider (``compress_randomized``: everything after ``R``); the two
halves compose to exactly the same package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .formats import PIXEL_SHIFT, CipherPackage
from .keyrng import SecretKey, derive_streams
from .quantdiff import joint_quantize_diffuse, sigma_delta_quantize
from .srm import (
    Direction,
    RandomizerKind,
    SensingConfig,
    SensingOperator,
    block_transform,
    downsample_scale,
    image_to_vector,
    normalize,
    vector_to_image,
)

__all__ = [
    "check_image",
    "measure",
    "encode_image",
    "randomize_image",
    "derandomize_image",
    "compress_randomized",
    "MeasurementStats",
    "measurement_stats",
]


def check_image(image, cfg: SensingConfig) -> np.ndarray:
    img = np.asarray(image)
    if img.shape != cfg.shape:
        raise ValueError(f"image shape {img.shape} does not match config {cfg.shape}")
    return img


def measure(image, cfg: SensingConfig, key: SecretKey) -> np.ndarray:
    """Real measurements ``y = Phi (x - 128)`` before normalization."""
    img = check_image(image, cfg)
    x = image_to_vector(img) - PIXEL_SHIFT
    return SensingOperator.from_key(cfg, key).forward(x)


def _package(y, cfg, streams):
    y_norm, offset, scale = normalize(y)
    q_star = joint_quantize_diffuse(y_norm, streams.v, streams.u0)
    return CipherPackage(cfg.height, cfg.width, cfg.block_size, cfg.m, cfg.transform,
                         cfg.randomizer, offset, scale, q_star.tobytes())


def encode_image(image, cfg: SensingConfig, key: SecretKey) -> CipherPackage:
    y = measure(image, cfg, key)
    return _package(y, cfg, derive_streams(key, cfg.n, cfg.m))


def randomize_image(image, key: SecretKey) -> np.ndarray:
    """Owner-side lightweight encryption: permute the pixels with ``R``.

    The result has the same shape and dtype and the same pixel histogram.
    Only the first ``N`` key draws are used, so the provider can later pick
    any ``M`` for the same key.
    """
    img = np.asarray(image)
    h, w = img.shape
    st = derive_streams(key, h * w, 1)
    flat = img.ravel(order="F")[st.tau_r - 1]
    return flat.reshape((h, w), order="F")


def compress_randomized(randomized, cfg: SensingConfig, key: SecretKey) -> CipherPackage:
    """Provider-side step: transform, down-sample, normalize, quantize and diffuse."""
    if cfg.randomizer is not RandomizerKind.PERMUTATION:
        raise ValueError("the split workflow only supports the permutation randomizer")
    img = check_image(randomized, cfg)
    st = derive_streams(key, cfg.n, cfg.m)
    # R is a permutation, so shifting after it is the same as before it
    z = image_to_vector(img) - PIXEL_SHIFT
    z = block_transform(z, cfg.block_size, cfg.transform, Direction.FORWARD)
    y = downsample_scale(z, st.tau_d, cfg.m, cfg.n)
    return _package(y, cfg, st)


@dataclass
class MeasurementStats:
    m: int
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float
    qq_correlation: float
    saturation_rate: float
    degenerate: bool
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    qq_theoretical: np.ndarray
    qq_ordered: np.ndarray

    def summary(self):
        return {
            "m": self.m,
            "mean": self.mean,
            "std": self.std,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "qq_correlation": self.qq_correlation,
            "saturation_rate": self.saturation_rate,
            "degenerate": int(self.degenerate),
        }


def measurement_stats(y, bins: int = 64, image=None) -> MeasurementStats:
    """Histogram and normality statistics of pre-quantization measurements.

    Degenerate inputs (zero-variance measurements, or a constant source image
    when ``image`` is given) are flagged and get NaN shape statistics.
    """
    y = np.asarray(y, dtype=float).ravel()
    flat_image = image is not None and np.ptp(np.asarray(image)) == 0
    degenerate = bool(y.size < 2 or np.ptp(y) == 0 or flat_image)
    counts, edges = np.histogram(y, bins=bins)
    (theo, ordered), (_, _, r) = stats.probplot(y, dist="norm", fit=True)
    if degenerate:
        skew = kurt = r = float("nan")
        sat = 0.0
    else:
        skew = float(stats.skew(y))
        kurt = float(stats.kurtosis(y, fisher=True))
        y_norm, _, _ = normalize(y)
        q, _ = sigma_delta_quantize(y_norm, 0.0)
        sat = float(np.mean((q == 0) | (q == 255)))
    return MeasurementStats(
        m=y.size,
        mean=float(np.mean(y)),
        std=float(np.std(y, ddof=1)) if y.size > 1 else 0.0,
        skewness=skew,
        excess_kurtosis=kurt,
        qq_correlation=float(r),
        saturation_rate=sat,
        degenerate=degenerate,
        hist_counts=counts,
        hist_edges=edges,
        qq_theoretical=np.asarray(theo),
        qq_ordered=np.asarray(ordered),
    )


def derandomize_image(randomized, key: SecretKey) -> np.ndarray:
    """Invert :func:`randomize_image` (key holder only)."""
    img = np.asarray(randomized)
    h, w = img.shape
    st = derive_streams(key, h * w, 1)
    flat = np.empty(h * w, dtype=img.dtype)
    flat[st.tau_r - 1] = img.ravel(order="F")
    return vector_to_image(flat, (h, w))

