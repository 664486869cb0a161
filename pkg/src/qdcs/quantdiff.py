"""8-bit sigma-delta quantization fused with modular-256 diffusion.

The quantizer maps ``a`` to ``round(a) + 127`` on ``[-127.5, 128.5)`` and
clips to 0 / 255 outside it, with ties rounded toward +inf.  The running
error ``u`` is fed into the next sample and only updated on non-saturated
outputs; the update subtracts the reconstruction level ``q - 127``, not the
offset-coded byte.  Diffusion chains every output byte to the keystream and
to the previous ciphertext byte: ``q*_i = q_i + v_i + q*_{i-1} (mod 256)``
with ``q*_0 = v_0``.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "LEVEL",
    "quantize_scalar",
    "quantize",
    "sigma_delta_quantize",
    "diffuse",
    "inverse_diffuse",
    "joint_quantize_diffuse",
    "dequantize",
]

LEVEL = 127
_LOW = -127.5
_HIGH = 128.5


def _round_half_up(a: float) -> int:
    r = math.floor(a)
    return r + 1 if a - r >= 0.5 else r


def quantize_scalar(a: float) -> int:
    a = float(a)
    if not math.isfinite(a):
        raise ValueError(f"cannot quantize non-finite value {a!r}")
    if a < _LOW:
        return 0
    if a >= _HIGH:
        return 255
    return _round_half_up(a) + LEVEL


def quantize(a) -> np.ndarray:
    """Vectorized memoryless quantizer (no error feedback)."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("cannot quantize non-finite values")
    r = np.floor(a)
    r = r + (a - r >= 0.5)
    q = np.clip(r + LEVEL, 0, 255)
    q = np.where(a < _LOW, 0, np.where(a >= _HIGH, 255, q))
    return q.astype(np.uint8)


def sigma_delta_quantize(y, u0: float, *, trace: bool = False):
    """First-order error-feedback quantization of ``y``.

    Returns ``(q, u_final)``, or ``(q, u_final, u_trace)`` with
    ``trace=True`` where ``u_trace[i]`` is the error after sample ``i``.
    """
    y = np.asarray(y, dtype=float).ravel()
    q = np.empty(y.size, dtype=np.uint8)
    us = np.empty(y.size) if trace else None
    u = float(u0)
    for i, yi in enumerate(y.tolist()):
        a = u + yi
        qi = quantize_scalar(a)
        if 0 < qi < 255:
            u = a - (qi - LEVEL)
        q[i] = qi
        if trace:
            us[i] = u
    if trace:
        return q, u, us
    return q, u


def _check_keystream(n, v):
    v = np.asarray(v)
    if v.ndim != 1 or v.size != n + 1:
        raise ValueError(f"keystream must have {n + 1} bytes, got {v.size}")
    if v.size and (v.min() < 0 or v.max() > 255):
        raise ValueError("keystream entries must be bytes")
    return v.astype(np.int64)


def _as_bytes(q, name):
    q = np.asarray(q).ravel()
    if q.size and (q.min() < 0 or q.max() > 255):
        raise ValueError(f"{name} entries must lie in [0, 255]")
    return q.astype(np.int64)


def diffuse(q, v) -> np.ndarray:
    q = _as_bytes(q, "q")
    v = _check_keystream(q.size, v)
    # q*_i = v_0 + sum_{k<=i} (q_k + v_k)  (mod 256)
    return ((v[0] + np.cumsum(q + v[1:])) % 256).astype(np.uint8)


def inverse_diffuse(q_star, v) -> np.ndarray:
    qs = _as_bytes(q_star, "q_star")
    v = _check_keystream(qs.size, v)
    prev = np.concatenate([v[:1], qs[:-1]])
    return ((qs - v[1:] - prev) % 256).astype(np.uint8)


def joint_quantize_diffuse(y, v, u0: float) -> np.ndarray:
    """Single pass equivalent of ``diffuse(sigma_delta_quantize(y, u0)[0], v)``."""
    y = np.asarray(y, dtype=float).ravel()
    vs = _check_keystream(y.size, v).tolist()
    out = np.empty(y.size, dtype=np.uint8)
    u = float(u0)
    prev = vs[0]
    for i, yi in enumerate(y.tolist()):
        a = u + yi
        qi = quantize_scalar(a)
        if 0 < qi < 255:
            u = a - (qi - LEVEL)
        prev = (qi + vs[i + 1] + prev) & 0xFF
        out[i] = prev
    return out


def dequantize(q, offset: float, scale: float) -> np.ndarray:
    """Map bytes back to the measurement domain: ``(q - 127) / scale + offset``."""
    if scale == 0 or not math.isfinite(scale):
        raise ValueError(f"invalid normalization scale {scale!r}")
    q = np.asarray(q, dtype=float)
    return (q - LEVEL) / scale + offset
