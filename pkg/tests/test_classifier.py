import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnntone.classifier import (
    ClassifierConfig,
    ClassifierParams,
    assemble_input,
    classify,
    duration_branch,
    predict,
    zero_embedding,
)


def _params(c_dim, seed=0, dur_hidden=10):
    rng = np.random.default_rng(seed)
    return ClassifierParams(rng.normal(size=(5, c_dim)), rng.normal(size=5),
                            rng.normal(size=(dur_hidden, 3)), rng.normal(size=dur_hidden))


class TestDurationBranch:
    def test_zero_weights(self):
        p = ClassifierParams(np.zeros((5, 4)), np.zeros(5), np.zeros((10, 3)), np.zeros(10))
        np.testing.assert_array_equal(duration_branch(np.array([1.0, -2.0, 3.0]), p), np.full(10, 0.5))

    def test_zero_input_isolates_bias(self):
        p = _params(4, seed=1)
        expected = [1.0 / (1.0 + math.exp(-b)) for b in p.bd]
        np.testing.assert_allclose(duration_branch(np.zeros(3), p), expected, rtol=1e-15)

    def test_scalar_oracle(self):
        p = _params(4, seed=2)
        d = np.array([0.3, -1.2, 2.0])
        expected = []
        for i in range(10):
            z = p.bd[i] + sum(p.Wd[i, j] * d[j] for j in range(3))
            expected.append(1.0 / (1.0 + math.exp(-z)))
        np.testing.assert_allclose(duration_branch(d, p), expected, rtol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            duration_branch(np.zeros(4), _params(4))


class TestAssembleInput:
    def test_full_context_dimension(self):
        cfg = ClassifierConfig(True, True, True, embedding_dim=250, dur_hidden=10)
        assert cfg.c_dim == 760
        c = assemble_input(np.ones(250), np.ones(250), np.ones(250), np.ones(10), cfg)
        assert c.shape == (760,)

    def test_identity_without_extras(self):
        cfg = ClassifierConfig(embedding_dim=6)
        curr = np.arange(6.0)
        np.testing.assert_array_equal(assemble_input(curr, cfg=cfg), curr)

    def test_boundary_zero_embedding(self):
        cfg = ClassifierConfig(use_preceding=True, embedding_dim=250)
        c = assemble_input(np.full(250, 0.4), zero_embedding(cfg), cfg=cfg)
        assert np.all(c[:250] == 0.0)
        assert np.all(c[250:] == 0.4)

    def test_order(self):
        cfg = ClassifierConfig(True, True, True, embedding_dim=2, dur_hidden=1)
        c = assemble_input(np.array([3.0, 4.0]), np.array([1.0, 2.0]), np.array([5.0, 6.0]), np.array([7.0]), cfg)
        np.testing.assert_array_equal(c, [1, 2, 3, 4, 5, 6, 7])

    @pytest.mark.parametrize("kwargs", [
        dict(prec=np.zeros(3)),
        dict(dur=np.zeros(10)),
    ])
    def test_flag_mismatch(self, kwargs):
        with pytest.raises(ValueError):
            assemble_input(np.zeros(3), cfg=ClassifierConfig(embedding_dim=3), **kwargs)

    def test_missing_flagged_input(self):
        with pytest.raises(ValueError):
            assemble_input(np.zeros(3), cfg=ClassifierConfig(use_succeeding=True, embedding_dim=3))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_injective(self, seed):
        cfg = ClassifierConfig(True, True, True, embedding_dim=3, dur_hidden=2)
        rng = np.random.default_rng(seed)
        parts = [rng.normal(size=3) for _ in range(3)] + [rng.normal(size=2)]
        a = assemble_input(parts[1], parts[0], parts[2], parts[3], cfg)
        k = int(rng.integers(4))
        parts[k] = parts[k] + 1.0
        b = assemble_input(parts[1], parts[0], parts[2], parts[3], cfg)
        assert not np.array_equal(a, b)


def _mp_softmax(z):
    with mpmath.workdps(50):
        e = [mpmath.exp(mpmath.mpf(float(v))) for v in z]
        s = mpmath.fsum(e)
        return [float(v / s) for v in e]


class TestPredict:
    def test_zero_logits_uniform(self):
        p = ClassifierParams(np.zeros((5, 3)), np.zeros(5))
        np.testing.assert_array_equal(predict(np.ones(3), p).p, np.full(5, 0.2))

    def test_saturation(self):
        p = ClassifierParams(np.zeros((5, 3)), np.array([1000.0, 0, 0, 0, 0]))
        with np.errstate(over="raise"):
            post = predict(np.ones(3), p)
        assert abs(post.p[0] - 1.0) < 1e-12

    def test_extended_precision_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            p = ClassifierParams(rng.normal(size=(5, 8)) * 3, rng.normal(size=5))
            c = rng.normal(size=8)
            post = predict(c, p)
            np.testing.assert_allclose(post.p, _mp_softmax(post.logits), rtol=1e-13, atol=1e-300)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict(np.ones(4), ClassifierParams(np.zeros((5, 3)), np.zeros(5)))

    @given(st.lists(st.floats(-1e4, 1e4), min_size=5, max_size=5))
    @settings(max_examples=200, deadline=None)
    def test_normalized(self, u0):
        post = predict(np.zeros(2), ClassifierParams(np.zeros((5, 2)), np.array(u0)))
        assert abs(post.p.sum() - 1.0) <= 1e-12
        assert np.all((post.p >= 0) & (post.p <= 1))


class TestClassify:
    def test_uniform_ties_to_tone_zero(self):
        assert classify(np.ones(3), ClassifierParams(np.zeros((5, 3)), np.zeros(5))) == 0

    def test_dominant_bias(self):
        assert classify(np.ones(3), ClassifierParams(np.zeros((5, 3)), np.array([0, 0, 0, 0, 5.0]))) == 4

    @given(st.integers(0, 2**31 - 1), st.sampled_from([-100.0, -3.5, 0.25, 7.0, 1e3]))
    @settings(max_examples=100, deadline=None)
    def test_shift_invariance(self, seed, shift):
        rng = np.random.default_rng(seed)
        U = rng.normal(size=(5, 4))
        u0 = rng.normal(size=5)
        c = rng.normal(size=4)
        a = predict(c, ClassifierParams(U, u0))
        b = predict(c, ClassifierParams(U, u0 + shift))
        assert classify(c, ClassifierParams(U, u0)) == classify(c, ClassifierParams(U, u0 + shift))
        np.testing.assert_allclose(a.p, b.p, atol=1e-12, rtol=0)
