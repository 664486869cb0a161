import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from qdcs.pipeline import measure
from qdcs.quantdiff import (
    dequantize,
    diffuse,
    inverse_diffuse,
    joint_quantize_diffuse,
    quantize,
    quantize_scalar,
    sigma_delta_quantize,
)
from qdcs.srm import SensingConfig, normalize

bytes_arrays = st.lists(st.integers(0, 255), min_size=1, max_size=300)


@pytest.mark.parametrize(
    "a,q",
    [
        (0.0, 127),
        (-200.0, 0),
        (128.5, 255),
        (-127.5, 0),
        (1e9, 255),
        (0.5, 128),       # tie goes up
        (-0.5, 127),      # tie goes up
        (-0.51, 126),
        (127.49, 254),
        (127.5, 255),     # round(127.5) + 127 = 255 on the linear branch
        (-127.6, 0),
        (-126.5, 1),
    ],
)
def test_quantize_scalar(a, q):
    assert quantize_scalar(a) == q


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_quantize_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        quantize_scalar(bad)
    with pytest.raises(ValueError):
        quantize(np.array([0.0, bad]))


def test_vector_quantizer_matches_scalar(rng):
    a = np.concatenate([rng.uniform(-140, 140, 5000), np.arange(-130, 131) + 0.5, [-127.5, 128.5]])
    assert quantize(a).tolist() == [quantize_scalar(x) for x in a]


def test_sigma_delta_examples():
    q, u = sigma_delta_quantize([0.0, 0.0, 0.0], 0.0)
    assert q.tolist() == [127, 127, 127] and u == 0.0

    q, u, trace = sigma_delta_quantize([0.3, 0.3, 0.3], 0.0, trace=True)
    assert q.tolist() == [127, 128, 127]
    assert np.allclose(trace, [0.3, -0.4, -0.1], atol=1e-12)

    q, u = sigma_delta_quantize([300.0], 0.2)
    assert q.tolist() == [255] and u == 0.2


def test_saturated_steps_freeze_error():
    q, _, trace = sigma_delta_quantize([0.3, -500.0, 900.0, 0.1], 0.0, trace=True)
    assert q.tolist() == [127, 0, 255, 127]
    assert np.allclose(trace, [0.3, 0.3, 0.3, 0.4])


def test_diffuse_examples():
    assert diffuse([0], [0, 0]).tolist() == [0]
    assert diffuse([100, 200], [5, 10, 20]).tolist() == [115, 79]
    assert inverse_diffuse([115, 79], [5, 10, 20]).tolist() == [100, 200]
    assert inverse_diffuse(np.zeros(5, np.uint8), np.zeros(6, np.uint8)).tolist() == [0] * 5


def test_diffuse_matches_recurrence(rng):
    q = rng.integers(0, 256, 500)
    v = rng.integers(0, 256, 501)
    prev = int(v[0])
    expected = []
    for i, qi in enumerate(q):
        prev = (int(qi) + int(v[i + 1]) + prev) % 256
        expected.append(prev)
    assert diffuse(q, v).tolist() == expected


def test_diffuse_length_checks():
    with pytest.raises(ValueError):
        diffuse([1, 2], [1, 2])
    with pytest.raises(ValueError):
        inverse_diffuse([1, 2], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        joint_quantize_diffuse([0.0], [1], 0.0)
    with pytest.raises(ValueError):
        diffuse([256], [0, 0])


def test_single_byte_change_propagates(rng):
    q = rng.integers(0, 256, 100)
    v = rng.integers(0, 256, 101)
    q2 = q.copy()
    q2[0] = (q2[0] + 1) % 256
    a, b = diffuse(q, v), diffuse(q2, v)
    assert np.all(a != b)


def test_joint_example():
    assert joint_quantize_diffuse([0.3, 0.3, 0.3], [1, 2, 3, 4], 0.0).tolist() == [130, 5, 136]


@settings(max_examples=200, deadline=None)
@given(bytes_arrays, st.data())
def test_diffusion_roundtrip_property(q, data):
    v = data.draw(st.lists(st.integers(0, 255), min_size=len(q) + 1, max_size=len(q) + 1))
    assert inverse_diffuse(diffuse(q, v), v).tolist() == q


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-300, 300, allow_nan=False), min_size=1, max_size=200),
    st.floats(-0.5, 0.5),
    st.data(),
)
def test_joint_equals_two_stage_property(y, u0, data):
    v = data.draw(st.lists(st.integers(0, 255), min_size=len(y) + 1, max_size=len(y) + 1))
    q, _ = sigma_delta_quantize(y, u0)
    assert joint_quantize_diffuse(y, v, u0).tolist() == diffuse(q, v).tolist()


def test_error_bounded_on_gaussian_input(rng):
    for _ in range(20):
        y = rng.normal(0, 42.5, 4000)
        y = y[np.abs(y) < 126]  # no sample can saturate once |u| <= 0.5
        u0 = rng.uniform(-0.5, 0.5)
        q, _, trace = sigma_delta_quantize(y, u0, trace=True)
        assert np.all((q > 0) & (q < 255))
        assert np.max(np.abs(trace)) <= 0.5


def test_saturation_rate_under_three_sigma(rng):
    y = rng.normal(5.0, 13.0, 100_000)
    y_norm, _, _ = normalize(y)
    q, _ = sigma_delta_quantize(y_norm, 0.0)
    rate = np.mean((q == 0) | (q == 255))
    assert rate <= 0.01


def test_ciphertext_avalanche_is_positional(rng):
    y = rng.normal(0, 42.5, 300)
    v = rng.integers(0, 256, 301)
    base = joint_quantize_diffuse(y, v, 0.1)
    j = 120
    y2 = y.copy()
    y2[j] += 7.0
    other = joint_quantize_diffuse(y2, v, 0.1)
    diff = np.flatnonzero(base != other)
    assert diff.min() == j
    assert np.array_equal(base[:j], other[:j])
    # the quantized byte moved by 7, so every later running sum is shifted
    assert np.all((other[j:].astype(int) - base[j:].astype(int)) % 256 != 0)


def test_diffused_bytes_uniform_on_natural_image(camera, key):
    from qdcs.keyrng import derive_streams

    cfg = SensingConfig.from_rate(256, 256, 32, 0.8)
    y_norm, _, _ = normalize(measure(camera, cfg, key))
    st_ = derive_streams(key, cfg.n, cfg.m)
    q_star = joint_quantize_diffuse(y_norm, st_.v, st_.u0)
    counts = np.bincount(q_star, minlength=256)
    expected = q_star.size / 256
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert stat < chi2.ppf(0.999, 255)


def test_dequantize_examples():
    assert dequantize([127], 0.0, 1.0).tolist() == [0.0]
    assert dequantize([128], 10.0, 0.5).tolist() == [12.0]
    with pytest.raises(ValueError):
        dequantize([1], 0.0, 0.0)


def test_plain_quantizer_roundtrip_bound(rng):
    y = rng.normal(3.0, 20.0, 5000)
    y_norm, offset, scale = normalize(y)
    q = quantize(y_norm)
    ok = (q > 0) & (q < 255)
    y_hat = dequantize(q, offset, scale)
    assert np.all(np.abs(y_hat[ok] - y[ok]) <= 0.5 / scale + 1e-9)
