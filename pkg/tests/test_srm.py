import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import block_diag, hadamard

from qdcs.keyrng import SecretKey, derive_streams
from qdcs.srm import (
    Direction,
    RandomizerKind,
    SensingConfig,
    SensingOperator,
    TransformKind,
    adjoint,
    apply_randomizer,
    apply_randomizer_adjoint,
    block_transform,
    downsample_scale,
    fwht,
    image_to_vector,
    measurement_count,
    normalize,
    sense,
    vector_to_image,
)


def dct_matrix(b):
    """Orthonormal DCT-II from its closed form."""
    k = np.arange(b)[:, None]
    j = np.arange(b)[None, :]
    c = np.sqrt(2.0 / b) * np.cos(np.pi * (2 * j + 1) * k / (2 * b))
    c[0] /= np.sqrt(2.0)
    return c


def block_matrix(kind, b):
    return dct_matrix(b) if kind is TransformKind.DCT else hadamard(b) / np.sqrt(b)


CONFIGS = [
    (4, 4, 4, 8, TransformKind.DCT, RandomizerKind.PERMUTATION),
    (4, 4, 8, 16, TransformKind.WHT, RandomizerKind.PERMUTATION),
    (8, 8, 16, 32, TransformKind.DCT, RandomizerKind.BERNOULLI_SIGN),
    (8, 8, 32, 51, TransformKind.WHT, RandomizerKind.BERNOULLI_SIGN),
    (6, 10, 12, 20, TransformKind.DCT, RandomizerKind.PERMUTATION),
    (8, 8, 64, 64, TransformKind.DCT, RandomizerKind.PERMUTATION),
]


def test_randomizer_examples():
    x = np.array([10.0, 20.0, 30.0])
    assert apply_randomizer(x, np.array([1, 2, 3])).tolist() == x.tolist()
    assert apply_randomizer(x, np.array([3, 1, 2])).tolist() == [30, 10, 20]
    out = apply_randomizer(np.array([1.0, 1.0]), np.array([2, 1]), RandomizerKind.BERNOULLI_SIGN)
    assert out.tolist() == [1, -1]


def test_randomizer_length_mismatch():
    with pytest.raises(ValueError):
        apply_randomizer(np.zeros(3), np.array([1, 2]))


@pytest.mark.parametrize("kind", list(RandomizerKind))
def test_randomizer_adjoint_is_inverse(kind, rng):
    tau = rng.permutation(50) + 1
    x = rng.normal(size=50)
    assert np.allclose(apply_randomizer_adjoint(apply_randomizer(x, tau, kind), tau, kind), x)


def test_transform_examples():
    assert np.array_equal(block_transform(np.zeros(64), 8, TransformKind.DCT), np.zeros(64))
    out = block_transform(np.array([1.0, 1.0]), 2, TransformKind.WHT)
    assert np.allclose(out, [math.sqrt(2), 0.0], atol=1e-15)


@pytest.mark.parametrize("kind", list(TransformKind))
@pytest.mark.parametrize("b", [1, 2, 4, 8, 32, 64, 128, 256])
def test_transform_matches_explicit_matrix(kind, b, rng):
    x = rng.normal(size=4 * b)
    expected = (block_diag(*[block_matrix(kind, b)] * 4) @ x)
    assert np.allclose(block_transform(x, b, kind), expected, atol=1e-10)


@pytest.mark.parametrize("kind", list(TransformKind))
@pytest.mark.parametrize("b", [2, 16, 32, 128, 256])
def test_transform_roundtrip_and_energy(kind, b, rng):
    x = rng.normal(size=8 * b)
    fx = block_transform(x, b, kind, Direction.FORWARD)
    assert abs(np.linalg.norm(fx) - np.linalg.norm(x)) < 1e-10
    assert np.max(np.abs(block_transform(fx, b, kind, Direction.INVERSE) - x)) < 1e-10


def test_transform_errors():
    with pytest.raises(ValueError):
        block_transform(np.zeros(10), 3)
    with pytest.raises(ValueError):
        block_transform(np.zeros(12), 6, TransformKind.WHT)
    with pytest.raises(ValueError):
        fwht(np.zeros((2, 3)))


def test_fwht_is_involution(rng):
    x = rng.normal(size=(3, 64))
    assert np.allclose(fwht(fwht(x)), x)


def test_downsample_examples():
    z = np.array([4.0, 8.0, 12.0, 16.0])
    assert np.allclose(downsample_scale(z, np.array([1, 2, 3, 4]), 4, 4), z)
    assert np.allclose(downsample_scale(z, np.array([3, 1]), 2, 4), [12 * math.sqrt(2), 4 * math.sqrt(2)])
    assert np.array_equal(downsample_scale(np.zeros(4), np.array([2, 4]), 2, 4), [0, 0])


@pytest.mark.parametrize("bad", [[1, 1], [0, 2], [2, 5]])
def test_downsample_rejects_bad_indices(bad):
    with pytest.raises(ValueError):
        downsample_scale(np.zeros(4), np.array(bad), 2, 4)


def test_config_validation():
    with pytest.raises(ValueError):
        SensingConfig(4, 4, 3, 8)
    with pytest.raises(ValueError):
        SensingConfig(4, 6, 12, 8, TransformKind.WHT)
    with pytest.raises(ValueError):
        SensingConfig(4, 4, 4, 17)
    with pytest.raises(ValueError):
        SensingConfig(4, 4, 4, 0)
    cfg = SensingConfig.from_rate(256, 256, 32, 0.5)
    assert cfg.m == 32768 and cfg.sampling_rate == 0.5


def test_measurement_count_rounding():
    assert measurement_count(64, 0.8) == 51
    assert measurement_count(10, 0.25) == 3  # 2.5 rounds up
    with pytest.raises(ValueError):
        measurement_count(10, 0.0)


def test_vectorization_is_column_stacking():
    img = np.array([[1, 2], [3, 4]])
    assert image_to_vector(img).tolist() == [1, 3, 2, 4]
    assert np.array_equal(vector_to_image(image_to_vector(img), (2, 2)), img)


def test_sense_zero_and_linearity(key, rng):
    cfg = SensingConfig(8, 8, 16, 40)
    assert np.array_equal(sense(np.zeros(64), cfg, key), np.zeros(40))
    x1, x2 = rng.normal(size=64), rng.normal(size=64)
    lhs = sense(2.5 * x1 - 0.7 * x2, cfg, key)
    rhs = 2.5 * sense(x1, cfg, key) - 0.7 * sense(x2, cfg, key)
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_sense_matches_hand_built_matrix():
    # N=4, B=2, M=4, WHT, tau_R=[2,4,1,3], tau_D=[3,1,4,2]
    tau_r = np.array([2, 4, 1, 3])
    tau_d = np.array([3, 1, 4, 2])
    R = np.eye(4)[tau_r - 1]
    F = block_diag(hadamard(2), hadamard(2)) / math.sqrt(2)
    D = np.eye(4)[tau_d - 1]
    phi = math.sqrt(4 / 4) * D @ F @ R
    cfg = SensingConfig(2, 2, 2, 4, TransformKind.WHT)
    op = SensingOperator(cfg, tau_r, tau_d)
    assert np.allclose(op.matrix(), phi, atol=1e-14)


def test_keyed_operator_matches_dense_construction(key):
    cfg = SensingConfig(8, 4, 8, 20, TransformKind.DCT)
    s = derive_streams(key, cfg.n, cfg.m)
    R = np.eye(cfg.n)[s.tau_r - 1]
    F = block_diag(*[dct_matrix(8)] * 4)
    D = np.eye(cfg.n)[s.tau_d - 1]
    phi = math.sqrt(cfg.n / cfg.m) * D @ F @ R
    assert np.allclose(SensingOperator.from_key(cfg, key).matrix(), phi, atol=1e-12)


def test_sign_randomizer_dense_construction(key):
    cfg = SensingConfig(4, 4, 4, 10, TransformKind.WHT, RandomizerKind.BERNOULLI_SIGN)
    s = derive_streams(key, cfg.n, cfg.m)
    R = np.diag((-1.0) ** (s.tau_r % 2))
    F = block_diag(*[hadamard(4) / 2.0] * 4)
    D = np.eye(cfg.n)[s.tau_d - 1]
    phi = math.sqrt(cfg.n / cfg.m) * D @ F @ R
    assert np.allclose(SensingOperator.from_key(cfg, key).matrix(), phi, atol=1e-12)


def test_adjoint_examples(key, rng):
    cfg = SensingConfig(8, 8, 16, 32)
    assert np.array_equal(adjoint(np.zeros(32), cfg, key), np.zeros(64))
    x, y = rng.normal(size=64), rng.normal(size=32)
    lhs = sense(x, cfg, key) @ y
    rhs = x @ adjoint(y, cfg, key)
    assert abs(lhs - rhs) / abs(lhs) < 1e-10


def test_square_identity_streams_adjoint_inverts(rng):
    cfg = SensingConfig(8, 8, 8, 64, TransformKind.DCT)
    ident = np.arange(1, 65)
    op = SensingOperator(cfg, ident, ident)
    x = rng.normal(size=64)
    assert np.max(np.abs(op.adjoint(op.forward(x)) - x)) < 1e-10


@pytest.mark.parametrize("h,w,b,m,kind,rz", CONFIGS)
def test_row_orthogonality(h, w, b, m, kind, rz, key):
    cfg = SensingConfig(h, w, b, m, kind, rz)
    phi = SensingOperator.from_key(cfg, key).matrix()
    assert np.max(np.abs(phi @ phi.T - (cfg.n / m) * np.eye(m))) < 1e-9


@pytest.mark.parametrize("kind", list(TransformKind))
@pytest.mark.parametrize("rz", list(RandomizerKind))
def test_full_operator_preserves_energy(kind, rz, key, rng):
    cfg = SensingConfig(8, 8, 16, 64, kind, rz)
    op = SensingOperator.from_key(cfg, key)
    for _ in range(10):
        x = rng.normal(size=64)
        assert abs(np.linalg.norm(op.forward(x)) - np.linalg.norm(x)) < 1e-9


@pytest.mark.parametrize("h,w,b,m,kind,rz", CONFIGS)
def test_dot_product_test_100_draws(h, w, b, m, kind, rz, key, rng):
    op = SensingOperator.from_key(SensingConfig(h, w, b, m, kind, rz), key)
    for _ in range(100):
        x, y = rng.normal(size=h * w), rng.normal(size=m)
        lhs, rhs = op.forward(x) @ y, x @ op.adjoint(y)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1e-300)


@settings(max_examples=40, deadline=None)
@given(
    raw=st.binary(min_size=16, max_size=16),
    logb=st.integers(0, 5),
    blocks=st.integers(1, 6),
    frac=st.floats(0.05, 1.0),
    kind=st.sampled_from(list(TransformKind)),
    rz=st.sampled_from(list(RandomizerKind)),
)
def test_adjoint_identity_property(raw, logb, blocks, frac, kind, rz):
    b = 2**logb
    n = b * blocks
    cfg = SensingConfig(n, 1, b, measurement_count(n, frac), kind, rz)
    op = SensingOperator.from_key(cfg, SecretKey(raw))
    gen = np.random.default_rng(len(raw) + n)
    x, y = gen.normal(size=n), gen.normal(size=cfg.m)
    lhs, rhs = op.forward(x) @ y, x @ op.adjoint(y)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_normalize_examples(rng):
    y_norm, offset, scale = normalize(np.full(10, 3.7))
    assert np.array_equal(y_norm, np.zeros(10)) and offset == 3.7 and scale == 1.0

    y = rng.normal(size=1000)
    y = (y - y.mean()) / y.std(ddof=1) * 42.5
    y_norm, offset, scale = normalize(y)
    assert abs(offset) < 1e-12
    assert scale == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(y_norm, y)

    z = rng.normal(3.0, 17.0, size=500)
    z_norm, _, _ = normalize(z)
    assert abs(np.std(z_norm, ddof=1) - 42.5) < 1e-9

    with pytest.raises(ValueError):
        normalize(np.array([1.0]))
