import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from imbalance_cnn.dataset import malimg_fixture
from imbalance_cnn.errors import InvalidArgument
from imbalance_cnn.loss import (
    class_weights,
    cross_entropy_loss,
    softmax_loss,
    softmax_probs,
    weight_sensitivity_table,
    weighted_softmax_loss,
)
from imbalance_cnn.nn import numeric_gradient, relative_error

SIZES = [s for _, s in malimg_fixture()]
NAMES = [n for n, _ in malimg_fixture()]

# Frozen from exact rational arithmetic: 1 + Fraction(S_max - S_k, beta * S_max)
OMEGA_SKINTRIM_B20 = 1.0486436080027128
OMEGA_YUNER_B20 = 1.036436080027128
MAX_OMEGA = {10: 1.0972872160054257, 20: 1.0486436080027128, 40: 1.0243218040013564}


def test_softmax_uniform():
    np.testing.assert_allclose(softmax_probs([[1.0, 1.0, 1.0]]), [[1 / 3] * 3], rtol=0, atol=1e-15)


def test_softmax_ln3():
    np.testing.assert_allclose(softmax_probs([[0.0, math.log(3)]]), [[0.25, 0.75]], atol=1e-15)


def test_softmax_large_logits_shift_invariant():
    p = softmax_probs([[1000.0, 1001.0]])
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p, softmax_probs([[0.0, 1.0]]), atol=1e-15)


def test_softmax_rejects_nonfinite():
    with pytest.raises(InvalidArgument):
        softmax_probs([[0.0, np.inf]])
    with pytest.raises(InvalidArgument):
        softmax_probs([[np.nan, 1.0]])


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 8)),
              elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(logits):
    p = softmax_probs(logits)
    assert np.all(p > 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_cross_entropy_examples():
    assert cross_entropy_loss([[0.0, 1.0]], [2]) == 0.0
    assert cross_entropy_loss([[0.25, 0.75]], [2]) == pytest.approx(0.2876820724517809, abs=1e-15)
    k = 7
    assert cross_entropy_loss(np.full((3, k), 1 / k), [1, 4, 7]) == pytest.approx(math.log(k), abs=1e-14)


def test_cross_entropy_label_range():
    with pytest.raises(InvalidArgument):
        cross_entropy_loss([[0.5, 0.5]], [3])
    with pytest.raises(InvalidArgument):
        cross_entropy_loss([[0.5, 0.5]], [0])


def test_class_weights_table1():
    w = class_weights(SIZES, 20)
    assert w[NAMES.index("Allaple.A")] == 1.0
    assert w[NAMES.index("Skintrim.N")] == pytest.approx(OMEGA_SKINTRIM_B20, abs=1e-12)
    assert w[NAMES.index("Yuner.A")] == pytest.approx(OMEGA_YUNER_B20, abs=1e-12)


@pytest.mark.parametrize("sizes,beta", [([], 20), ([3, 0], 20), ([3, 4], 0), ([3, 4], -1.0)])
def test_class_weights_errors(sizes, beta):
    with pytest.raises(InvalidArgument):
        class_weights(sizes, beta)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 5000), min_size=1, max_size=30),
       st.floats(0.1, 1000, allow_nan=False))
def test_class_weight_invariants(sizes, beta):
    w = class_weights(sizes, beta)
    s = np.array(sizes)
    assert np.all(w[s == s.max()] == 1.0)
    assert np.all(w >= 1.0)
    assert np.all(w < 1.0 + 1.0 / beta)
    order = np.argsort(s, kind="stable")
    assert np.all(np.diff(w[order]) <= 0)
    if beta >= 20:
        assert w.max() <= 1.05


def test_infinite_beta_gives_unit_weights():
    assert np.all(class_weights(SIZES, math.inf) == 1.0)


def test_weighted_reduces_to_unweighted_bitwise():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(9, 5)) * 4
    labels = rng.integers(1, 6, size=9)
    a = weighted_softmax_loss(logits, labels, np.ones(5))
    b = softmax_loss(logits, labels)
    assert a.loss == b.loss
    assert np.array_equal(a.grad_logits, b.grad_logits)
    assert np.array_equal(a.probabilities, b.probabilities)
    # the probability-based loss agrees to rounding
    assert cross_entropy_loss(b.probabilities, labels) == pytest.approx(b.loss, rel=1e-13)


def test_weighted_loss_examples():
    logits = np.log([[0.25, 0.75]])
    out = weighted_softmax_loss(logits, [2], [1.0, 1.05])
    assert out.loss == pytest.approx(0.30206617607437, abs=1e-13)
    out = weighted_softmax_loss(logits, [2], [1.0, 1.0])
    np.testing.assert_allclose(out.grad_logits, [[0.25, -0.25]], atol=1e-15)


def test_weighted_loss_weight_length():
    with pytest.raises(InvalidArgument):
        weighted_softmax_loss(np.zeros((2, 3)), [1, 2], [1.0, 1.0])


def test_weighted_loss_gradient_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m, k = rng.integers(1, 9), rng.integers(2, 8)
        logits = rng.normal(size=(m, k)) * 3
        labels = rng.integers(1, k + 1, size=m)
        w = 1 + rng.random(k) * 0.1
        out = weighted_softmax_loss(logits, labels, w)
        probe = logits.copy()
        num = numeric_gradient(lambda: weighted_softmax_loss(probe, labels, w).loss, probe)
        assert relative_error(out.grad_logits, num).max() <= 1e-8
        np.testing.assert_allclose(out.grad_logits.sum(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.probabilities.sum(axis=1), 1.0, atol=1e-12)


def test_loss_linear_in_weights():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(6, 4))
    labels = rng.integers(1, 5, size=6)
    w = 1 + rng.random(4) * 0.05
    base = weighted_softmax_loss(logits, labels, w)
    scaled = weighted_softmax_loss(logits, labels, 3.5 * w)
    assert scaled.loss == pytest.approx(3.5 * base.loss, rel=1e-14)
    np.testing.assert_allclose(scaled.grad_logits, 3.5 * base.grad_logits, rtol=1e-14, atol=1e-18)


def test_beta20_bounds_weighted_loss():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(50, 25))
    labels = rng.integers(1, 26, size=50)
    w = class_weights(SIZES, 20)
    assert weighted_softmax_loss(logits, labels, w).loss <= 1.05 * softmax_loss(logits, labels).loss


def test_sensitivity_table():
    tab = weight_sensitivity_table(SIZES, [10, 20, 40])
    assert tab.shape == (3, 25)
    for row, beta in zip(tab, (10, 20, 40)):
        assert row.max() == pytest.approx(MAX_OMEGA[beta], abs=1e-12)
        assert NAMES[int(row.argmax())] == "Skintrim.N"
    # larger beta pulls every weight towards 1
    assert np.all(np.diff(tab, axis=0) <= 0)
    assert np.all(weight_sensitivity_table([7, 7, 7], [1, 20, 1e6]) == 1.0)
    assert np.all(np.abs(weight_sensitivity_table(SIZES, [1e12])[0] - 1) < 1e-12)
