"""Structurally random sensing operator ``sqrt(N/M) * D * F * R``.

``R`` pre-randomizes the column-stacked image (a permutation or a random
sign flip), ``F`` is block diagonal with an orthonormal ``B x B`` DCT-II or
Walsh-Hadamard block, and ``D`` keeps ``M`` of the ``N`` transform
coefficients.  Nothing here ever builds the ``M x N`` matrix except
:meth:`SensingOperator.matrix`, which exists for small-scale checks.

Index arrays coming from :mod:`qdcs.keyrng` are 1-based.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, idct

from .keyrng import SecretKey, derive_streams

__all__ = [
    "TransformKind",
    "RandomizerKind",
    "Direction",
    "SensingConfig",
    "apply_randomizer",
    "apply_randomizer_adjoint",
    "fwht",
    "block_transform",
    "downsample_scale",
    "downsample_scale_adjoint",
    "SensingOperator",
    "sense",
    "adjoint",
    "normalize",
    "image_to_vector",
    "vector_to_image",
    "measurement_count",
]


class TransformKind(enum.IntEnum):
    DCT = 0
    WHT = 1


class RandomizerKind(enum.IntEnum):
    PERMUTATION = 0
    BERNOULLI_SIGN = 1


class Direction(enum.Enum):
    FORWARD = "forward"
    INVERSE = "inverse"


def _is_pow2(b):
    return b >= 1 and b & (b - 1) == 0


def measurement_count(n: int, rate: float) -> int:
    """``M = round(rate * n)`` with halves rounded up, clipped to ``[1, n]``."""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"sampling rate must lie in (0, 1], got {rate}")
    m = int(math.floor(rate * n + 0.5))
    return min(max(m, 1), n)


@dataclass(frozen=True)
class SensingConfig:
    height: int
    width: int
    block_size: int
    m: int
    transform: TransformKind = TransformKind.DCT
    randomizer: RandomizerKind = RandomizerKind.PERMUTATION

    def __post_init__(self):
        object.__setattr__(self, "transform", TransformKind(self.transform))
        object.__setattr__(self, "randomizer", RandomizerKind(self.randomizer))
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be positive")
        if self.block_size < 1 or self.n % self.block_size:
            raise ValueError(
                f"block size {self.block_size} does not divide N={self.n}"
            )
        if self.transform is TransformKind.WHT and not _is_pow2(self.block_size):
            raise ValueError("Walsh-Hadamard blocks must be a power of two")
        if not 1 <= self.m <= self.n:
            raise ValueError(f"M={self.m} outside [1, N={self.n}]")

    @classmethod
    def from_rate(cls, height, width, block_size, rate, **kwargs):
        return cls(height, width, block_size, measurement_count(height * width, rate), **kwargs)

    @property
    def n(self) -> int:
        return self.height * self.width

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def sampling_rate(self) -> float:
        return self.m / self.n


def image_to_vector(image) -> np.ndarray:
    """Column-stack a 2D image into a float vector."""
    return np.asarray(image, dtype=float).ravel(order="F")


def vector_to_image(x, shape) -> np.ndarray:
    return np.asarray(x).reshape(shape, order="F")


def _check_perm(tau, n, name="tau"):
    tau = np.asarray(tau)
    if tau.ndim != 1 or tau.size != n:
        raise ValueError(f"{name} has length {tau.size}, expected {n}")
    return tau


def apply_randomizer(x, tau_r, kind=RandomizerKind.PERMUTATION) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    tau = _check_perm(tau_r, x.size, "tau_r")
    if RandomizerKind(kind) is RandomizerKind.PERMUTATION:
        return x[tau - 1]
    return np.where(tau % 2 == 1, -x, x)


def apply_randomizer_adjoint(z, tau_r, kind=RandomizerKind.PERMUTATION) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    tau = _check_perm(tau_r, z.size, "tau_r")
    if RandomizerKind(kind) is RandomizerKind.PERMUTATION:
        out = np.empty_like(z)
        out[tau - 1] = z
        return out
    return np.where(tau % 2 == 1, -z, z)


def fwht(blocks: np.ndarray) -> np.ndarray:
    """Orthonormal fast Walsh-Hadamard transform along the last axis.

    Natural (Hadamard) ordering, scaled by ``1/sqrt(B)``; self-inverse.
    """
    a = np.array(blocks, dtype=float, copy=True)
    b = a.shape[-1]
    if not _is_pow2(b):
        raise ValueError(f"WHT length must be a power of two, got {b}")
    lead = a.shape[:-1]
    h = 1
    while h < b:
        v = a.reshape(*lead, b // (2 * h), 2, h)
        top = v[..., 0, :].copy()
        v[..., 0, :] += v[..., 1, :]
        v[..., 1, :] = top - v[..., 1, :]
        h *= 2
    return a / math.sqrt(b)


def block_transform(x, block_size, kind=TransformKind.DCT, direction=Direction.FORWARD) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    b = int(block_size)
    if b < 1 or x.size % b:
        raise ValueError(f"block size {b} does not divide length {x.size}")
    kind = TransformKind(kind)
    direction = Direction(direction)
    blocks = x.reshape(-1, b)
    if kind is TransformKind.WHT:
        if not _is_pow2(b):
            raise ValueError(f"WHT block size must be a power of two, got {b}")
        out = fwht(blocks)
    elif direction is Direction.FORWARD:
        out = dct(blocks, type=2, norm="ortho", axis=1)
    else:
        out = idct(blocks, type=2, norm="ortho", axis=1)
    return out.reshape(x.shape)


def _check_index_set(tau_d, n):
    tau_d = np.asarray(tau_d)
    if tau_d.ndim != 1:
        raise ValueError("tau_d must be one-dimensional")
    if tau_d.size and (tau_d.min() < 1 or tau_d.max() > n):
        raise ValueError(f"tau_d entries must lie in [1, {n}]")
    if np.unique(tau_d).size != tau_d.size:
        raise ValueError("tau_d contains duplicate indices")
    return tau_d


def downsample_scale(z, tau_d, m, n) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.size != n:
        raise ValueError(f"signal length {z.size} != N={n}")
    tau_d = _check_index_set(tau_d, n)
    if tau_d.size != m:
        raise ValueError(f"tau_d has {tau_d.size} entries, expected M={m}")
    return math.sqrt(n / m) * z[tau_d - 1]


def downsample_scale_adjoint(y, tau_d, n) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    m = y.size
    out = np.zeros(n)
    out[np.asarray(tau_d) - 1] = math.sqrt(n / m) * y
    return out


class SensingOperator:
    """Matrix-free ``Phi`` and ``Phi^T`` for fixed streams.

    Instances are immutable and may be shared between threads.
    """

    def __init__(self, cfg: SensingConfig, tau_r, tau_d):
        self.cfg = cfg
        self.tau_r = _check_perm(tau_r, cfg.n, "tau_r")
        if cfg.randomizer is RandomizerKind.PERMUTATION and not np.array_equal(
            np.sort(self.tau_r), np.arange(1, cfg.n + 1)
        ):
            raise ValueError("tau_r is not a permutation of 1..N")
        self.tau_d = _check_index_set(tau_d, cfg.n)
        if self.tau_d.size != cfg.m:
            raise ValueError(f"tau_d has {self.tau_d.size} entries, expected M={cfg.m}")

    @classmethod
    def from_key(cls, cfg: SensingConfig, key: SecretKey) -> "SensingOperator":
        st = derive_streams(key, cfg.n, cfg.m)
        return cls(cfg, st.tau_r, st.tau_d)

    @property
    def shape(self):
        return (self.cfg.m, self.cfg.n)

    def forward(self, x) -> np.ndarray:
        cfg = self.cfg
        x = np.asarray(x, dtype=float)
        if x.size != cfg.n:
            raise ValueError(f"signal length {x.size} != N={cfg.n}")
        z = apply_randomizer(x.ravel(), self.tau_r, cfg.randomizer)
        z = block_transform(z, cfg.block_size, cfg.transform, Direction.FORWARD)
        return downsample_scale(z, self.tau_d, cfg.m, cfg.n)

    def adjoint(self, y) -> np.ndarray:
        cfg = self.cfg
        y = np.asarray(y, dtype=float)
        if y.size != cfg.m:
            raise ValueError(f"measurement length {y.size} != M={cfg.m}")
        z = downsample_scale_adjoint(y.ravel(), self.tau_d, cfg.n)
        z = block_transform(z, cfg.block_size, cfg.transform, Direction.INVERSE)
        return apply_randomizer_adjoint(z, self.tau_r, cfg.randomizer)

    __call__ = forward

    def matrix(self) -> np.ndarray:
        """Materialize ``Phi`` column by column (small N only)."""
        n = self.cfg.n
        if n > 4096:
            raise ValueError("refusing to materialize an operator with N > 4096")
        eye = np.eye(n)
        return np.column_stack([self.forward(eye[:, j]) for j in range(n)])


def sense(x, cfg: SensingConfig, key: SecretKey) -> np.ndarray:
    return SensingOperator.from_key(cfg, key).forward(x)


def adjoint(y, cfg: SensingConfig, key: SecretKey) -> np.ndarray:
    return SensingOperator.from_key(cfg, key).adjoint(y)


def normalize(y):
    """Affine map putting three sample standard deviations at +-127.5.

    Returns ``(y_norm, offset, scale)`` with ``y_norm = (y - offset) * scale``.
    A zero-variance input gets ``scale = 1``.
    """
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise ValueError("normalization needs at least two measurements")
    if np.all(y == y.flat[0]):
        return np.zeros_like(y), float(y.flat[0]), 1.0
    offset = float(np.mean(y))
    sigma = float(np.std(y, ddof=1))
    scale = 127.5 / (3.0 * sigma) if sigma > 0 else 1.0
    return (y - offset) * scale, offset, scale
