import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from imbalance_cnn import features
from imbalance_cnn.errors import InvalidArgument, InvalidState
from imbalance_cnn.features import FeatureMap, extract_features, scale_to_uint8
from imbalance_cnn.imaging import read_pgm
from imbalance_cnn.nn import LayerSpec, Network
from imbalance_cnn.trainer import build_preset


@pytest.fixture
def net():
    return build_preset("vgg_tiny", 5, (16, 16), seed=3).eval()


def test_shape_and_nonnegative(net):
    x = np.random.default_rng(0).normal(size=(7, 1, 16, 16))
    f = extract_features(net, x)
    assert f.shape == (7, 128)
    assert np.all(f >= 0)


def test_duplicates_and_permutation(net):
    x = np.random.default_rng(1).normal(size=(4, 1, 16, 16))
    f = extract_features(net, np.concatenate([x, x[:1]]))
    assert np.array_equal(f[0], f[4])
    perm = [2, 0, 3, 1]
    np.testing.assert_array_equal(extract_features(net, x[perm]), extract_features(net, x)[perm])


def test_requires_eval_mode(net):
    net.train()
    with pytest.raises(InvalidState):
        extract_features(net, np.zeros((1, 1, 16, 16)))


def test_requires_three_fc_layers():
    small = Network([LayerSpec("fully_connected", units=3), LayerSpec("relu"),
                     LayerSpec("fully_connected", units=2)], (4,), seed=0).eval()
    with pytest.raises(InvalidArgument):
        extract_features(small, np.zeros((1, 4)))


def test_scaling_examples():
    m = np.array([[0.0, 0.5], [0.25, 1.0]])
    px, flag = scale_to_uint8(m)
    assert not flag
    # 0.5 * 255 = 127.5 rounds half up
    np.testing.assert_array_equal(px, [[0, 128], [64, 255]])
    px, flag = scale_to_uint8(np.full((2, 3), 4.2))
    assert flag and not px.any()


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (5, 6), elements=st.integers(0, 50).map(float)),
       st.sampled_from([0.5, 2.0, 4.0]), st.integers(-20, 20).map(float))
def test_scaling_affine_invariance(m, a, b):
    # dyadic scale and integer shift keep the arithmetic exact
    assert np.array_equal(scale_to_uint8(m)[0], scale_to_uint8(a * m + b)[0])


def test_export_shape_and_manifest(tmp_path):
    mat = np.random.default_rng(2).random((80, 128))
    row = features.export_feature_map(FeatureMap("Skintrim.N", mat), tmp_path / "s.pgm")
    img = read_pgm(tmp_path / "s.pgm")
    assert img.pixels.shape == (80, 128)
    assert img.pixels.min() == 0 and img.pixels.max() == 255
    assert (row["n"], row["D"], row["warning"]) == (80, 128, "")
    features.write_feature_manifest([row], tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "class,n,D,min,max,output_path,warning"


def test_export_constant_matrix(tmp_path):
    row = features.export_feature_map(FeatureMap("flat", np.zeros((3, 4))), tmp_path / "f.pgm")
    assert row["warning"] == "constant"
    assert not read_pgm(tmp_path / "f.pgm").pixels.any()
