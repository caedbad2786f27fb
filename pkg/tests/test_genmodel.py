import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from hintgen.errors import IncompatibleModelError, InvalidArgumentError
from hintgen.genmodel import (
    HintVAE, ModelDims, ModelParams, backward, decode, encode, forward_loss, init_params, loss,
    model_from_bytes, model_to_bytes, reparameterize, train,
)
from hintgen.traindata import TrainingPair

from oracles import grad_check, toy_batch


def test_kl_zero_at_prior():
    _, _, kl = loss(np.zeros((1, 6)), np.zeros((1, 6)), np.zeros((1, 4)), np.zeros((1, 4)))
    assert kl == 0.0


def test_kl_closed_form_unit_shift():
    _, _, kl = loss(np.zeros((1, 6)), np.zeros((1, 6)), np.ones((1, 1)), np.zeros((1, 1)))
    assert kl == pytest.approx(0.5)


def test_kl_nonnegative():
    rng = np.random.default_rng(0)
    mu = rng.normal(0, 3, (10_000, 3))
    lv = rng.uniform(-8, 8, (10_000, 3))
    kl = 0.5 * (mu ** 2 + np.exp(lv) - 1 - lv).sum(axis=1)
    assert (kl >= 0).all()
    for k in range(0, 10_000, 2000):
        assert loss(np.zeros(6), np.zeros(6), mu[k], lv[k])[2] >= 0


def test_perfect_prediction_zero_loss():
    t = np.full((2, 6), 0.5)
    assert loss(t, t, np.zeros((2, 2)), np.zeros((2, 2)))[0] == 0.0


def test_masked_cells_do_not_count():
    pred = np.full((1, 12), 0.5)
    target = pred.copy()
    mask = np.zeros((1, 12))
    mask[0, :6] = 1
    target[0, 8] = 0.9
    assert loss(pred, target, np.zeros((1, 2)), np.zeros((1, 2)), mask=mask)[0] == 0.0


def test_reparameterize():
    mu, lv = np.array([0.3, -1.0]), np.array([0.5, -2.0])
    assert np.array_equal(reparameterize(mu, lv, np.zeros(2)), mu)
    e = np.array([0.7, -0.2])
    assert np.array_equal(reparameterize(np.zeros(2), np.zeros(2), e), e)
    rng = np.random.default_rng(1)
    z = reparameterize(np.broadcast_to(mu, (100_000, 2)), np.broadcast_to(lv, (100_000, 2)),
                       rng.standard_normal((100_000, 2)))
    sigma = np.exp(lv / 2)
    assert np.allclose(z.mean(axis=0), mu, atol=0.01 * np.maximum(np.abs(mu), sigma))
    assert np.allclose(z.std(axis=0), sigma, rtol=0.01)
    with pytest.raises(InvalidArgumentError):
        reparameterize(mu, lv, np.zeros(3))


def test_toy_forward_matches_hand_arithmetic():
    # plan width 6 (one edge), condition 5, latent 2, one hidden layer of 2
    dims = ModelDims(6, 5, 2, (2,))
    p = init_params(dims, 0).zeros_like()
    a = p.arrays
    a["enc0.W"][0, 0] = 1.0
    a["enc0.W"][1, 1] = -2.0
    a["enc0.b"][:] = (0.1, 0.2)
    a["mu.W"][:] = [[1.0, 0.0], [0.0, 3.0]]
    a["mu.b"][:] = (0.5, -0.5)
    a["logvar.b"][:] = (9.0, -9.0)
    x = np.zeros(11)
    x[0], x[1] = 0.3, 0.4
    mu, lv = encode(p, x)
    h = np.tanh([0.3 + 0.1, -0.8 + 0.2])
    assert mu == pytest.approx([h[0] + 0.5, 3 * h[1] - 0.5])
    assert lv.tolist() == [8.0, -8.0]

    a["dec0.W"][0, 0] = 2.0
    a["dec0.W"][2, 1] = 1.0
    a["out.W"][0, :] = 1.0
    out = decode(p, np.array([0.25, 0.0]), np.array([1.0, 0.5, 0.5, 0.0, 0.0]))
    g = np.tanh([0.5, 1.0])
    expected = np.full(6, 0.5)
    expected[:] = 1 / (1 + np.exp(-g[0]))
    assert out == pytest.approx(expected)


def test_zero_weights_give_bias_outputs():
    dims = ModelDims(6, 5, 3, (4,))
    p = init_params(dims, 0).zeros_like()
    p.arrays["mu.b"][:] = (1.0, 2.0, 3.0)
    p.arrays["out.b"][:] = 0.0
    mu, _ = encode(p, np.ones(11))
    assert mu.tolist() == [1.0, 2.0, 3.0]
    assert decode(p, np.ones(3), np.ones(5)).tolist() == [0.5] * 6


def test_gradients_match_finite_differences():
    dims = ModelDims(12, 8, 2, (8,))
    rng = np.random.default_rng(7)
    worst = 0.0
    for b in range(25):
        params = init_params(dims, b)
        for name in params.arrays:
            params.arrays[name] += rng.normal(0, 0.1, params.arrays[name].shape)
        x, t = toy_batch(dims, 4, rng, n_edges_on=1 + b % 2)
        eps = rng.standard_normal((4, 2))
        worst = max(worst, grad_check(params, x, t, eps, 0.1))
    assert worst < 1e-4


def test_zero_loss_batch_has_zero_gradients():
    dims = ModelDims(6, 5, 2, (4,))
    p = init_params(dims, 0).zeros_like()
    x = np.concatenate([np.full(6, 0.3), [1.0, 1.0, 1.0, 0.0, 0.0]])[None]
    t = np.full((1, 6), 0.5)
    grads, (total, _, _) = backward(p, x, t, np.zeros((1, 2)), 0.1)
    assert total == 0.0
    assert all(not g.any() for g in grads.arrays.values())


def test_duplicated_batch_keeps_mean_gradient():
    dims = ModelDims(12, 8, 2, (8,))
    rng = np.random.default_rng(3)
    p = init_params(dims, 3)
    x, t = toy_batch(dims, 5, rng)
    eps = rng.standard_normal((5, 2))
    g1, _ = backward(p, x, t, eps, 0.1)
    g2, _ = backward(p, np.vstack([x, x]), np.vstack([t, t]), np.vstack([eps, eps]), 0.1)
    for name in g1.arrays:
        assert np.allclose(g1.arrays[name], g2.arrays[name], atol=1e-14)


def _pairs(n, rng, plan_dim=12):
    pairs = []
    for k in range(n):
        qe = np.tile([0.0, 1.0, 1.0], plan_dim // 6)
        qe[:3] = (1.0, 1.0, round(rng.uniform(0.1, 1), 6))
        inp = np.zeros(plan_dim)
        inp[:6] = rng.permutation(6) / 6 + 1 / 6
        tgt = np.zeros(plan_dim)
        tgt[:6] = np.array([1, 4, 2, 3, 6, 5]) / 6
        cond = np.concatenate([qe, [0.001, 0.2]])
        pairs.append(TrainingPair("q01a", k, k + 1, 0.001, 0.2, 2.0, 1.0, inp, tgt, cond))
    return pairs


def test_training_reduces_loss_by_half():
    state = train(_pairs(200, np.random.default_rng(0)), latent_dim=4, hidden=(16,),
                  learning_rate=1e-2, batch_size=32, epochs=40, seed=0)
    assert len(state.loss_trace) == 40
    assert state.loss_trace[-1][0] <= 0.5 * state.meta["initial_loss"]


def test_single_pair_memorized():
    state = train(_pairs(1, np.random.default_rng(1)), latent_dim=2, hidden=(16,),
                  learning_rate=1e-2, batch_size=1, epochs=600, seed=0)
    assert state.loss_trace[-1][1] < 1e-3


def test_training_is_reproducible():
    pairs = _pairs(50, np.random.default_rng(2))
    a = train(pairs, latent_dim=2, hidden=(8,), epochs=3, seed=5)
    b = train(pairs, latent_dim=2, hidden=(8,), epochs=3, seed=5)
    assert a.loss_trace == b.loss_trace
    assert model_to_bytes(a) == model_to_bytes(b)


def test_empty_pairs_rejected():
    with pytest.raises(InvalidArgumentError):
        train([])


def test_estimator_api():
    from hintgen.genmodel import pairs_to_arrays
    X, y = pairs_to_arrays(_pairs(40, np.random.default_rng(4)))
    est = HintVAE(latent_dim=3, hidden=(8,), epochs=2, random_state=1)
    assert est.get_params()["latent_dim"] == 3
    c = clone(est).set_params(epochs=1)
    assert c.epochs == 1 and est.epochs == 2
    est.fit(X, y)
    assert est.transform(X).shape == (40, 3)
    pred = est.predict(X)
    assert pred.shape == y.shape and ((pred >= 0) & (pred <= 1)).all()
    assert np.array_equal(pred, est.predict(X, epsilon=np.zeros(3)))
    assert est.sample(X, random_state=0).shape == y.shape
    assert est.score(X, y) < 0
    with pytest.raises(InvalidArgumentError):
        est.predict(X[:, :5])
    with pytest.raises(InvalidArgumentError):
        HintVAE(hidden=(8,), epochs=1).fit(X[:, :-1], y)


def _state():
    return train(_pairs(30, np.random.default_rng(5)), latent_dim=2, hidden=(8,), epochs=2,
                 seed=0)


def test_model_bytes_round_trip():
    s = _state()
    s.meta["schema_hash"] = "abcd"
    back = model_from_bytes(model_to_bytes(s), "abcd")
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.uniform(0, 1, s.params.dims.input_dim)
        assert np.array_equal(encode(back.params, x)[0], encode(s.params, x)[0])
    assert back.loss_trace == s.loss_trace and back.step == s.step
    assert model_to_bytes(back) == model_to_bytes(s)


def test_model_errors():
    s = _state()
    s.meta["schema_hash"] = "abcd"
    data = model_to_bytes(s)
    with pytest.raises(IncompatibleModelError):
        model_from_bytes(data, "ffff")
    corrupted = bytearray(data)
    corrupted[len(data) // 2] ^= 0xFF
    with pytest.raises(IncompatibleModelError):
        model_from_bytes(bytes(corrupted))
    with pytest.raises(IncompatibleModelError):
        model_from_bytes(b"NOTAMODEL" + data[9:])
    with pytest.raises(IncompatibleModelError):
        model_from_bytes(data[:20])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000))
def test_forward_is_pathwise_deterministic(seed):
    dims = ModelDims(12, 8, 2, (8,))
    p = init_params(dims, seed)
    rng = np.random.default_rng(seed)
    x, _ = toy_batch(dims, 3, rng)
    eps = rng.standard_normal((3, 2))
    mu, lv = encode(p, x)
    z = reparameterize(mu, lv, eps)
    assert np.array_equal(decode(p, z, x[:, 12:]), decode(p, reparameterize(*encode(p, x), eps),
                                                          x[:, 12:]))
    assert np.isfinite(z).all()
