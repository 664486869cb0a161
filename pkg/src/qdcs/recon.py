"""Decoding: saturation rejection, sparsifying bases and an l1 solver.

The solver is GPSR-BB (gradient projection on the split ``s = p - n`` with
``p, n >= 0``, Barzilai-Borwein step lengths and an exact line search on
``[0, 1]`` that keeps the objective monotone) applied to

    tau * ||s||_1 + 0.5 * ||b - A s||_2^2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.fft import dctn, idctn
from scipy.sparse.linalg import LinearOperator, lsqr

from .errors import NoUsableMeasurementsError, SolverError
from .formats import PIXEL_SHIFT, CipherPackage
from .keyrng import SecretKey, derive_streams
from .quantdiff import dequantize, inverse_diffuse
from .srm import SensingOperator, image_to_vector, vector_to_image

__all__ = [
    "BasisKind",
    "SolverConfig",
    "GpsrResult",
    "reject_saturated",
    "sparsify",
    "gpsr_solve",
    "solve_image",
    "Decoded",
    "decode",
    "reconstruct_image",
    "psnr",
]

Operator = Callable[[np.ndarray], np.ndarray]


class BasisKind(enum.Enum):
    DCT2D = "dct2d"
    HAAR2D = "haar2d"


@dataclass(frozen=True)
class SolverConfig:
    """Penalized-form solver settings.

    ``tau`` is the absolute l1 weight; when it is ``None`` the weight is
    ``tau_rel * ||A^T b||_inf``.
    """

    tau: Optional[float] = None
    tau_rel: float = 1e-3
    max_iters: int = 500
    rel_tol: float = 1e-5
    basis: BasisKind = BasisKind.DCT2D
    debias: bool = False
    alpha_min: float = 1e-30
    alpha_max: float = 1e30

    def __post_init__(self):
        object.__setattr__(self, "basis", BasisKind(self.basis))
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.tau_rel > 0:
            raise ValueError("tau_rel must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


def reject_saturated(q):
    """Keep the bytes strictly inside ``(0, 255)``.

    Returns 0-based ``kept_indices`` (in order) and the kept values.
    """
    q = np.asarray(q).ravel()
    kept = np.flatnonzero((q > 0) & (q < 255))
    if kept.size == 0:
        raise NoUsableMeasurementsError("every measurement is saturated")
    return kept, q[kept]


def _is_pow2(n):
    return n >= 1 and n & (n - 1) == 0


def _haar_axis(a, axis, inverse=False):
    a = np.moveaxis(np.array(a, dtype=float, copy=True), axis, -1)
    n = a.shape[-1]
    r2 = math.sqrt(2.0)
    if not inverse:
        length = n
        while length > 1:
            seg = a[..., :length].copy()
            half = length // 2
            a[..., :half] = (seg[..., 0::2] + seg[..., 1::2]) / r2
            a[..., half:length] = (seg[..., 0::2] - seg[..., 1::2]) / r2
            length = half
    else:
        length = 2
        while length <= n:
            half = length // 2
            lo = a[..., :half].copy()
            hi = a[..., half:length].copy()
            a[..., 0:length:2] = (lo + hi) / r2
            a[..., 1:length:2] = (lo - hi) / r2
            length *= 2
    return np.moveaxis(a, -1, axis)


def sparsify(x, shape, basis=BasisKind.DCT2D, direction="analysis") -> np.ndarray:
    """Orthonormal 2D transform of a column-stacked image vector.

    ``analysis`` maps pixels to coefficients, ``synthesis`` maps back.
    Coefficient arrays are column-stacked the same way as images.
    HAAR2D is the separable full-depth Haar basis and needs dyadic sides.
    """
    basis = BasisKind(basis)
    h, w = shape
    x = np.asarray(x, dtype=float)
    if x.size != h * w:
        raise ValueError(f"vector length {x.size} does not match shape {shape}")
    img = vector_to_image(x, shape)
    inverse = {"analysis": False, "synthesis": True}[direction]
    if basis is BasisKind.DCT2D:
        out = idctn(img, norm="ortho") if inverse else dctn(img, norm="ortho")
    else:
        if not (_is_pow2(h) and _is_pow2(w)):
            raise ValueError(f"HAAR2D needs power-of-two dimensions, got {shape}")
        out = _haar_axis(_haar_axis(img, 0, inverse), 1, inverse)
    return image_to_vector(out)


@dataclass
class GpsrResult:
    s: np.ndarray
    tau: float
    iterations: int
    converged: bool
    objective: np.ndarray = field(repr=False)


def _debias(forward, adjoint, b, s, iters):
    support = np.flatnonzero(s)
    if support.size == 0:
        return s
    n = s.size

    def mv(xs):
        full = np.zeros(n)
        full[support] = xs
        return forward(full)

    def rmv(r):
        return adjoint(r)[support]

    op = LinearOperator((b.size, support.size), matvec=mv, rmatvec=rmv, dtype=float)
    xs = lsqr(op, b, x0=s[support], iter_lim=iters, atol=1e-12, btol=1e-12)[0]
    out = np.zeros(n)
    out[support] = xs
    return out


def gpsr_solve(forward: Operator, adjoint: Operator, b, cfg: SolverConfig = SolverConfig(),
               x0=None) -> GpsrResult:
    """Minimize ``tau*||s||_1 + 0.5*||b - A s||^2`` by GPSR-BB (monotone)."""
    b = np.asarray(b, dtype=float).ravel()
    if not np.all(np.isfinite(b)):
        raise ValueError("measurements must be finite")
    atb = adjoint(b)
    n = atb.size
    tau = cfg.tau if cfg.tau is not None else cfg.tau_rel * float(np.max(np.abs(atb), initial=0.0))
    if tau == 0.0:
        # only reachable when A^T b = 0, where s = 0 is optimal
        return GpsrResult(np.zeros(n), 0.0, 0, True, np.array([0.5 * b @ b]))

    if x0 is None:
        u = np.zeros(n)
        v = np.zeros(n)
        resid = b.copy()
    else:
        x0 = np.asarray(x0, dtype=float).ravel()
        u = np.maximum(x0, 0.0)
        v = np.maximum(-x0, 0.0)
        resid = b - forward(u - v)
    f = 0.5 * resid @ resid + tau * (u.sum() + v.sum())
    history = [f]
    alpha = 1.0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        g = adjoint(resid)
        gu = tau - g
        gv = tau + g
        du = np.maximum(u - alpha * gu, 0.0) - u
        dv = np.maximum(v - alpha * gv, 0.0) - v
        adx = forward(du - dv)
        gamma = adx @ adx
        slope = du @ gu + dv @ gv
        lam = 1.0 if gamma <= 0 else min(max(-slope / gamma, 0.0), 1.0)
        u += lam * du
        v += lam * dv
        resid -= lam * adx
        f_new = 0.5 * resid @ resid + tau * (u.sum() + v.sum())
        if not math.isfinite(f_new):
            raise SolverError("non-finite objective",
                              {"iteration": it, "last_objective": f, "alpha": alpha})
        dd = du @ du + dv @ dv
        alpha = cfg.alpha_max if gamma <= 0 else min(max(dd / gamma, cfg.alpha_min), cfg.alpha_max)
        change = abs(f_new - f) / f if f > 0 else 0.0
        f = f_new
        history.append(f)
        if change < cfg.rel_tol:
            converged = True
            break

    s = u - v
    if cfg.debias:
        s = _debias(forward, adjoint, b, s, cfg.max_iters)
    return GpsrResult(s, tau, it, converged, np.asarray(history))


def solve_image(op: SensingOperator, y, cfg: SolverConfig = SolverConfig(), kept=None):
    """Recover the column-stacked signal ``x`` with ``y = (Phi x)[kept]``.

    Returns ``(x_hat, GpsrResult)``; ``kept=None`` uses every row.
    """
    shape = op.cfg.shape
    m = op.cfg.m

    def synth(s):
        return sparsify(s, shape, cfg.basis, "synthesis")

    def anal(x):
        return sparsify(x, shape, cfg.basis, "analysis")

    if kept is None:
        def fwd(s):
            return op.forward(synth(s))

        def adj(r):
            return anal(op.adjoint(r))
    else:
        kept = np.asarray(kept)

        def fwd(s):
            return op.forward(synth(s))[kept]

        def adj(r):
            full = np.zeros(m)
            full[kept] = r
            return anal(op.adjoint(full))

    res = gpsr_solve(fwd, adj, y, cfg)
    return synth(res.s), res


@dataclass
class Decoded:
    image: np.ndarray
    kept: np.ndarray
    result: GpsrResult


def decode(pkg: CipherPackage, key: SecretKey, cfg: SolverConfig = SolverConfig()) -> Decoded:
    """Inverse diffusion, saturation rejection, de-quantization and l1 recovery.

    A wrong key is not detected; it decodes to noise.
    """
    sc = pkg.config
    st = derive_streams(key, sc.n, sc.m)
    q = inverse_diffuse(pkg.q_star, st.v)
    kept, q_kept = reject_saturated(q)
    y = dequantize(q_kept, pkg.offset, pkg.scale)
    op = SensingOperator(sc, st.tau_r, st.tau_d)
    x_hat, res = solve_image(op, y, cfg, kept)
    image = np.clip(vector_to_image(x_hat + PIXEL_SHIFT, sc.shape), 0.0, 255.0)
    return Decoded(image, kept, res)


def reconstruct_image(pkg: CipherPackage, key: SecretKey, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    return decode(pkg, key, cfg).image


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for 8-bit images; ``inf`` when identical."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)
