"""Known-plaintext attack harness.

The attacker gathers ``N`` linearly independent plaintext/ciphertext pairs
from a fixed-key encryption oracle and estimates the sensing matrix as the
solution of ``Phi_hat X = Y``.  Against bare linear sensing this recovers
``Phi`` to solver precision; against the quantized and diffused pipeline the
estimate is meaningless and held-out ciphertexts do not decode.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.fft import idctn

from .errors import CollectionError, ConditioningError
from .keyrng import SecretKey
from .pipeline import encode_image
from .recon import SolverConfig, gpsr_solve, psnr, sparsify
from .srm import SensingConfig, SensingOperator, TransformKind, image_to_vector, vector_to_image

__all__ = [
    "AttackMode",
    "KpaDataset",
    "make_oracle",
    "random_plaintexts",
    "collect_pairs",
    "estimate_phi",
    "smooth_image",
    "AttackReport",
    "evaluate_attack",
    "run_attack",
]

Oracle = Callable[[np.ndarray], np.ndarray]

RANK_RTOL = 1e-8
COND_LIMIT = 1e12
ATTACK_SOLVER = SolverConfig(tau_rel=1e-4, max_iters=5000, rel_tol=1e-10)


class AttackMode(enum.Enum):
    RAW_LINEAR = "raw"
    QUANTIZED_DIFFUSED = "quantized"


@dataclass
class KpaDataset:
    X: np.ndarray
    Y: np.ndarray
    mode: AttackMode
    candidates_drawn: int


def make_oracle(cfg: SensingConfig, key: SecretKey, mode: AttackMode) -> Oracle:
    """Fixed-key encryption oracle taking a column-stacked image vector.

    RAW_LINEAR returns ``Phi x``; QUANTIZED_DIFFUSED returns the diffused
    package bytes as floats.
    """
    mode = AttackMode(mode)
    if mode is AttackMode.RAW_LINEAR:
        op = SensingOperator.from_key(cfg, key)
        return op.forward

    def oracle(x):
        image = vector_to_image(np.asarray(x, dtype=float), cfg.shape)
        return encode_image(image, cfg, key).q_star.astype(float)

    return oracle


def random_plaintexts(shape, rng: np.random.Generator):
    """Endless stream of uniformly random 8-bit images, column-stacked."""
    h, w = shape
    while True:
        yield rng.integers(0, 256, size=h * w).astype(float)


def collect_pairs(oracle: Oracle, n: int, mode=AttackMode.RAW_LINEAR,
                  candidates: Optional[Iterable[np.ndarray]] = None,
                  rng: Optional[np.random.Generator] = None,
                  shape=None) -> KpaDataset:
    """Query the oracle on ``n`` linearly independent plaintexts.

    A candidate is rejected when it is (numerically) in the span of the
    accepted ones: its residual after projection, relative to its norm, must
    exceed ``RANK_RTOL``.  The final matrix is checked by its singular values.
    """
    mode = AttackMode(mode)
    if candidates is None:
        if shape is None:
            side = math.isqrt(n)
            shape = (side, n // side) if side * (n // side) == n else (n, 1)
        candidates = random_plaintexts(shape, rng or np.random.default_rng(0))
    basis = np.zeros((n, n))
    cols, outs = [], []
    drawn = 0
    for x in candidates:
        if len(cols) == n or drawn >= 10 * n:
            break
        drawn += 1
        x = np.asarray(x, dtype=float).ravel()
        if x.size != n:
            raise ValueError(f"plaintext has {x.size} entries, expected {n}")
        norm = np.linalg.norm(x)
        if norm == 0:
            continue
        k = len(cols)
        r = x.copy()
        for _ in range(2):  # classical Gram-Schmidt with one reorthogonalization
            r -= basis[:, :k] @ (basis[:, :k].T @ r)
        rn = np.linalg.norm(r)
        if rn <= RANK_RTOL * norm:
            continue
        basis[:, k] = r / rn
        cols.append(x)
        outs.append(np.asarray(oracle(x), dtype=float).ravel())
    if len(cols) < n:
        raise CollectionError(f"only {len(cols)} independent plaintexts after {drawn} candidates")
    X = np.column_stack(cols)
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise CollectionError("collected plaintexts are numerically rank deficient")
    return KpaDataset(X, np.column_stack(outs), mode, drawn)


def estimate_phi(data: KpaDataset) -> np.ndarray:
    """Solve ``Phi_hat X = Y`` without forming ``X^-1``."""
    X, Y = data.X, data.Y
    if X.shape[0] != X.shape[1]:
        raise ValueError("X must be square")
    cond = np.linalg.cond(X)
    if not cond <= COND_LIMIT:
        raise ConditioningError(f"plaintext matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    return np.linalg.solve(X.T, Y.T).T


def smooth_image(shape, rng: np.random.Generator, terms: int = 3) -> np.ndarray:
    """Low-frequency test image built from a few random DCT atoms."""
    h, w = shape
    coef = np.zeros(shape)
    coef[:terms, :terms] = rng.normal(0.0, 1.0, (terms, terms))
    base = idctn(coef, norm="ortho")
    span = np.ptp(base)
    base = (base - base.mean()) / span if span > 0 else base * 0
    return np.clip(128.0 + 160.0 * base, 0, 255)


@dataclass
class AttackReport:
    """Outcome of one attack run.

    ``holdout_residual`` is ``||Phi_hat x - y|| / ||y||`` on the held-out
    image; the in-sample residual is always zero because ``X`` is square.
    """

    phi_error: float
    decode_psnr: float
    holdout_residual: float
    mode: str = ""
    n: int = 0
    m: int = 0
    seed: int = -1

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    def csv_header(self) -> str:
        return ",".join(asdict(self)) + "\n"

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(asdict(self).values())
        return buf.getvalue()


def evaluate_attack(phi_hat, oracle: Oracle, trial_image, phi_true=None,
                    solver: SolverConfig = ATTACK_SOLVER) -> AttackReport:
    """Decode a held-out ciphertext with the estimated matrix.

    ``phi_error`` is NaN unless the true matrix is supplied.  The attacker
    solves ``min tau||s||_1 + 0.5||y - Phi_hat Psi s||^2`` in the solver's basis.
    """
    phi_hat = np.asarray(phi_hat, dtype=float)
    trial = np.asarray(trial_image, dtype=float)
    shape = trial.shape
    if phi_hat.shape[1] != trial.size:
        raise ValueError("estimated matrix does not match the trial image size")
    if phi_true is None:
        phi_error = float("nan")
    else:
        phi_true = np.asarray(phi_true, dtype=float)
        phi_error = float(np.linalg.norm(phi_hat - phi_true) / np.linalg.norm(phi_true))
    x = image_to_vector(trial)
    y = np.asarray(oracle(x), dtype=float)
    holdout = float(np.linalg.norm(phi_hat @ x - y) / max(np.linalg.norm(y), 1e-300))
    psi = np.column_stack([sparsify(e, shape, solver.basis, "synthesis") for e in np.eye(trial.size)])
    a = phi_hat @ psi
    res = gpsr_solve(lambda s: a @ s, lambda r: a.T @ r, y, solver)
    x_hat = np.clip(vector_to_image(psi @ res.s, shape), 0, 255)
    return AttackReport(phi_error, psnr(x_hat, trial), holdout)


def run_attack(mode, n: int = 64, m: int = 51, seed: int = 0, block_size: int = 8,
               transform="dct") -> AttackReport:
    """Full attack against a hidden key derived from ``seed``."""
    mode = AttackMode(mode)
    side = math.isqrt(n)
    if side * side != n:
        raise ValueError(f"N={n} must be a perfect square")
    if n > 4096:
        raise ValueError("attack demo is limited to N <= 4096")
    tk = TransformKind[transform.upper()] if isinstance(transform, str) else TransformKind(transform)
    cfg = SensingConfig(side, side, block_size, m, tk)
    rng = np.random.default_rng(seed)
    key = SecretKey(rng.bytes(16))
    oracle = make_oracle(cfg, key, mode)
    data = collect_pairs(oracle, n, mode, rng=rng, shape=cfg.shape)
    phi_hat = estimate_phi(data)
    phi_true = SensingOperator.from_key(cfg, key).matrix()
    trial = smooth_image(cfg.shape, rng)
    report = evaluate_attack(phi_hat, oracle, trial, phi_true)
    return replace(report, mode=mode.value, n=n, m=m, seed=seed)

