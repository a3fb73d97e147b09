import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import reference as ref
from softcam import features, imaging
from softcam.errors import DimensionError, ParameterError
from softcam.features import BLOCK_ORDER, extract_features, fit_normalizer


@pytest.mark.parametrize("s,n", [(1, 6), (2, 24), (3, 54), (4, 96)])
def test_feature_length(s, n, images32):
    assert features.feature_length(s) == n
    assert extract_features(images32[0], s=s).shape == (n,)


def test_black_image_s2():
    # a constant image passes the adaptive threshold everywhere, and A, D, E follow it
    mu = extract_features(np.zeros((48, 64), np.uint8), s=2)
    blocks = dict(zip(BLOCK_ORDER.split(","), mu.reshape(6, 4)))
    assert np.all(blocks["A"] == 255) and np.all(blocks["D"] == 255) and np.all(blocks["E"] == 255)
    assert not blocks["C"].any() and not blocks["M"].any() and not blocks["G"].any()


def test_s1_gray_entry_is_global_mean(images32):
    img = images32[7]
    mu = extract_features(img, s=1)
    assert mu[BLOCK_ORDER.split(",").index("G")] == img.mean()


def test_blocks_match_reference_filters(images32):
    img = images32[1]
    a = ref.adaptive(img)
    expected = {"G": img, "A": a, "D": ref.morph(a, "dilate"), "E": ref.morph(a, "erode"),
                "C": ref.canny(img), "M": ref.binary(img, 100)}
    mu = extract_features(img, s=3)
    want = np.concatenate([ref.pool(expected[k], 3).ravel() for k in BLOCK_ORDER.split(",")])
    assert np.array_equal(mu, want)


def test_raw_range_and_determinism(images32):
    for img in images32[:5]:
        mu = extract_features(img)
        assert mu.min() >= 0 and mu.max() <= 255
        assert np.array_equal(mu, extract_features(img.copy()))


def test_bad_grid():
    with pytest.raises(ParameterError):
        extract_features(np.zeros((8, 8), np.uint8), s=9)


def test_normalizer_examples():
    n = fit_normalizer([[0.0, 0.0], [2.0, 2.0]])
    assert n.mean.tolist() == [1, 1] and n.std.tolist() == [1, 1]
    same = fit_normalizer([[3.0, 4.0]] * 5)
    assert np.all(same.std == 1) and not same.normalize([3.0, 4.0]).any()


def test_normalizer_statistics():
    x = np.random.default_rng(7).standard_normal((1000, 4))
    n = fit_normalizer(x)
    assert np.all(np.abs(n.mean) < 0.1) and np.all(np.abs(n.std - 1) < 0.1)


def test_normalizer_errors():
    with pytest.raises(ParameterError):
        fit_normalizer([[1.0, 2.0]])
    with pytest.raises(DimensionError):
        fit_normalizer([[1.0, 2.0], [1.0]])
    with pytest.raises(DimensionError):
        fit_normalizer([[1.0, 2.0], [3.0, 4.0]]).normalize([1.0, 2.0, 3.0])


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 8)),
              elements=st.floats(-1e3, 1e3)))
def test_normalized_training_set(x):
    n = fit_normalizer(x)
    z = n.normalize(x)
    live = x.std(axis=0) >= features.STD_FLOOR
    assert np.all(np.abs(z.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(z.std(axis=0)[live] - 1) < 1e-6)
    assert np.allclose(n.denormalize(z), x, rtol=0, atol=1e-9 * max(1.0, np.abs(x).max()))


def test_normalize_examples():
    n = fit_normalizer(np.random.default_rng(1).uniform(0, 255, (10, 6)))
    assert not features.normalize(n.mean, n).any()
    assert np.allclose(features.normalize(n.mean + n.std, n), 1.0)
