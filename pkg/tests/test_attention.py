import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import numeric_grad, rel_error
from spkcount.attention import (
    AttentionParams,
    attention_backward,
    attention_pool,
    attention_scores,
    average_pool,
    average_pool_backward,
    project_key_value,
)


def _params(r, k, dk, dv, dtype=np.float64):
    return AttentionParams(r.standard_normal((dk, k)).astype(dtype), r.standard_normal((dv, k)).astype(dtype),
                           r.standard_normal(dk).astype(dtype))


# -------------------------------------------------------------- projections


def test_identity_key_projection(rng):
    x = rng.standard_normal((4, 6))
    p = AttentionParams(np.eye(4), rng.standard_normal((3, 4)), np.zeros(4))
    keys, _ = project_key_value(x, p)
    np.testing.assert_array_equal(keys, x)


def test_zero_feature_map(rng):
    keys, values = project_key_value(np.zeros((5, 3)), _params(rng, 5, 2, 4))
    assert not keys.any() and not values.any()


def test_projection_hand_matmul():
    x = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 4.0]])  # K=3, M=2
    wk = np.array([[1.0, 0.0, 2.0], [-1.0, 1.0, 1.0]])
    keys, _ = project_key_value(x, AttentionParams(wk, wk, np.zeros(2)))
    np.testing.assert_allclose(keys, [[1 + 1.0, 2 + 8.0], [-1 + 3 + 0.5, -2 - 1 + 4.0]])


def test_projection_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        project_key_value(np.zeros((4, 3)), _params(rng, 5, 2, 2))


def test_params_validation():
    with pytest.raises(ValueError):
        AttentionParams(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros(2))
    with pytest.raises(ValueError):
        AttentionParams(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros(3))


def test_params_init_shapes():
    p = AttentionParams.init(16, seed=1)
    assert p.Wk.shape == (16, 16) and p.Wv.shape == (16, 16) and p.q.shape == (16,)
    q = AttentionParams.init(16, seed=1)
    assert np.array_equal(p.Wk, q.Wk) and not np.array_equal(p.Wk, p.Wv)


# ------------------------------------------------------------------ scores


def test_zero_query_uniform(rng):
    s = attention_scores(rng.standard_normal((3, 5)), np.zeros(3))
    assert not s.r.any()
    np.testing.assert_allclose(s.w, 0.2)


def test_single_step_weight_one(rng):
    s = attention_scores(rng.standard_normal((3, 1)), rng.standard_normal(3))
    assert s.w.tolist() == [1.0]


def test_scores_hand_computed():
    m = np.arange(5)
    keys = np.zeros((4, 5))
    keys[0] = m
    s = attention_scores(keys, np.array([1.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(s.r, m / 2)
    e = [math.exp(v / 2) for v in m]
    np.testing.assert_allclose(s.w, [v / sum(e) for v in e], rtol=1e-12)


def test_scores_zero_dk():
    with pytest.raises(ValueError):
        attention_scores(np.zeros((0, 3)), np.zeros(0))


# -------------------------------------------------------------------- pool


def test_pool_single_column(rng):
    p = _params(rng, 4, 3, 2)
    x = rng.standard_normal((4, 1))
    np.testing.assert_allclose(attention_pool(x, p), p.Wv @ x[:, 0], atol=1e-14)


def test_pool_equal_keys_is_mean_of_values(rng):
    p = _params(rng, 4, 3, 4)
    p.Wk[:] = 0.0  # every key is the zero vector
    x = rng.standard_normal((4, 7))
    np.testing.assert_allclose(attention_pool(x, p), (p.Wv @ x).mean(axis=1), atol=1e-12)


def test_pool_two_step_hand_computed():
    # keys r = [1, 0] with d_k = 1 and q = 1; values are x itself
    x = np.array([[1.0, 0.0], [2.0, -2.0]])
    p = AttentionParams(np.array([[1.0, 0.0]]), np.eye(2), np.array([1.0]))
    w0 = math.e / (math.e + 1)
    assert w0 == pytest.approx(0.7311, abs=1e-4)
    np.testing.assert_allclose(attention_pool(x, p), [w0 * 1.0, w0 * 2.0 + (1 - w0) * -2.0], rtol=1e-12)


def test_pool_batched_matches_loop(rng):
    p = _params(rng, 5, 3, 4)
    xs = rng.standard_normal((6, 5, 8))
    batched = attention_pool(xs, p)
    for i in range(6):
        np.testing.assert_allclose(batched[i], attention_pool(xs[i], p), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 9), st.integers(0, 2**31), st.floats(0.0, 4.0))
def test_entropy_nonincreasing_in_query_scale(k, m, seed, c):
    r = np.random.default_rng(seed)
    keys = r.standard_normal((k, m))
    q = r.standard_normal(k)

    def entropy(scale):
        w = attention_scores(keys, q * scale).w
        return -float(np.sum(w * np.log(np.maximum(w, 1e-300))))

    assert entropy(c + 0.5) <= entropy(c) + 1e-12


# ---------------------------------------------------------------- backward


def test_backward_zero_grad(rng):
    p = _params(rng, 4, 3, 3)
    _, cache = attention_pool(rng.standard_normal((4, 5)), p, return_cache=True)
    for g in attention_backward(np.zeros(3), cache, p):
        assert not np.any(g)


def test_backward_single_step_query_grad_zero(rng):
    p = _params(rng, 4, 3, 3)
    _, cache = attention_pool(rng.standard_normal((4, 1)), p, return_cache=True)
    _, _, gq, _ = attention_backward(rng.standard_normal(3), cache, p)
    assert np.all(gq == 0.0)


def test_backward_without_cache(rng):
    with pytest.raises(RuntimeError):
        attention_backward(np.zeros(3), None, _params(rng, 4, 3, 3))


@pytest.mark.parametrize("batch", [(), (3,)])
def test_backward_finite_difference(rng, batch):
    p = _params(rng, 5, 3, 3)
    x = rng.standard_normal(batch + (5, 4))
    up = rng.standard_normal(batch + (3,))
    _, cache = attention_pool(x, p, return_cache=True)
    gWk, gWv, gq, gx = attention_backward(up, cache, p)
    loss = lambda: float(np.sum(attention_pool(x, p) * up))  # noqa: E731
    assert rel_error(gWk, numeric_grad(loss, p.Wk)) < 1e-4
    assert rel_error(gWv, numeric_grad(loss, p.Wv)) < 1e-4
    assert rel_error(gq, numeric_grad(loss, p.q)) < 1e-4
    assert rel_error(gx, numeric_grad(loss, x)) < 1e-4


# ------------------------------------------------------------- average pool


def test_average_pool_single_column(rng):
    x = rng.standard_normal((6, 1))
    np.testing.assert_array_equal(average_pool(x), x[:, 0])


def test_average_pool_arithmetic():
    assert average_pool(np.array([[1.0, 3.0]])).tolist() == [2.0]


def test_average_pool_loop_oracle(rng):
    x = rng.standard_normal((128, 20))
    ref = np.array([sum(x[k, m] for m in range(20)) / 20 for k in range(128)])
    np.testing.assert_allclose(average_pool(x), ref, atol=1e-12)


def test_average_pool_backward(rng):
    x = rng.standard_normal((2, 3, 5))
    up = rng.standard_normal((2, 3))
    g = average_pool_backward(up, 5)
    assert rel_error(g, numeric_grad(lambda: float(np.sum(average_pool(x) * up)), x)) < 1e-6


def test_average_pool_empty():
    with pytest.raises(ValueError):
        average_pool(np.zeros((3, 0)))
