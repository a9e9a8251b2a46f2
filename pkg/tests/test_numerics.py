import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foodchain.numerics import (
    NonFiniteError, ParamSet, SgdConfig, dumps_params, fit_minibatch, grad_check, iterate_minibatches,
    load_params, loads_params, role_rng, save_params, sgd_step, xavier_uniform,
)


def single(value, grad):
    ps = ParamSet()
    ps.add("p", np.array(value, dtype=float))
    ps.grads["p"][...] = grad
    return ps


def test_zero_gradient_is_a_fixed_point():
    ps = single([1.0], [0.0])
    sgd_step(ps, SgdConfig(0.001))
    assert ps["p"].tolist() == [1.0]


def test_one_step_arithmetic():
    ps = single([1.0], [1.0])
    sgd_step(ps, SgdConfig(0.001))
    assert ps["p"][0] == pytest.approx(0.999, abs=1e-15)
    assert ps.step == 1
    assert ps.grads["p"][0] == 0.0


def test_quadratic_converges_to_minimum():
    ps = single([0.0], [0.0])
    cfg = SgdConfig(0.1)
    for _ in range(100):
        ps.grads["p"][...] = 2 * (ps["p"] - 3.0)
        sgd_step(ps, cfg)
    assert abs(ps["p"][0] - 3.0) < 1e-6


def test_clipping_caps_the_global_norm():
    ps = ParamSet()
    ps.add("a", np.zeros(2))
    ps.add("b", np.zeros(1))
    ps.grads["a"][...] = [30.0, 0.0]
    ps.grads["b"][...] = [40.0]
    sgd_step(ps, SgdConfig(1.0, clip_norm=5.0))
    assert ps["a"].tolist() == pytest.approx([-3.0, 0.0])
    assert ps["b"].tolist() == pytest.approx([-4.0])


def test_frozen_prefixes_are_not_updated():
    ps = ParamSet()
    ps.add("enc.W", np.ones(2))
    ps.add("head.W", np.ones(2))
    for n in ps.names():
        ps.grads[n][...] = 1.0
    sgd_step(ps, SgdConfig(0.5), frozen=("enc.",))
    assert ps["enc.W"].tolist() == [1.0, 1.0]
    assert ps["head.W"].tolist() == [0.5, 0.5]


def test_non_finite_gradient_names_the_parameter():
    ps = single([1.0], [np.nan])
    with pytest.raises(NonFiniteError, match="'p'"):
        sgd_step(ps, SgdConfig())


@pytest.mark.parametrize("kwargs", [dict(learning_rate=0.0), dict(batch_size=0), dict(epochs=-1)])
def test_sgd_config_validation(kwargs):
    with pytest.raises(ValueError):
        SgdConfig(**kwargs)


def test_grad_check_exact_on_quadratic():
    ps = single([2.0], [0.0])

    def loss(p):
        p.grads["p"][...] = 2 * p["p"]
        return float(np.sum(p["p"] ** 2))

    assert grad_check(loss, ps) < 1e-8


def test_grad_check_detects_a_wrong_gradient():
    ps = single([2.0, -1.0], [0.0, 0.0])

    def loss(p):
        p.grads["p"][...] = 3 * p["p"]
        return float(np.sum(p["p"] ** 2))

    assert grad_check(loss, ps) > 0.1


def test_grad_check_rejects_bad_epsilon_and_nan_loss():
    ps = single([1.0], [0.0])
    with pytest.raises(ValueError):
        grad_check(lambda p: 0.0, ps, epsilon=1e-2)
    with pytest.raises(NonFiniteError):
        grad_check(lambda p: float("nan"), ps)


def test_xavier_bounds_and_role_streams():
    W = xavier_uniform(role_rng(0, "x"), 6, 10)
    assert W.shape == (6, 10)
    assert np.abs(W).max() <= np.sqrt(6 / 16)
    a = role_rng(3, "encoder").normal(size=4)
    b = role_rng(3, "encoder").normal(size=4)
    c = role_rng(3, "predictor").normal(size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_minibatches_cover_every_index_once():
    batches = list(iterate_minibatches(10, 3, np.random.default_rng(0)))
    assert [len(b) for b in batches] == [3, 3, 3, 1]
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))


class _Linear:
    def __init__(self):
        self.params = ParamSet()
        self.params.add("w", np.zeros(1))

    def predict(self, X):
        return X[:, 0] * self.params["w"][0]

    def loss_grad(self, X, y):
        err = self.predict(X) - y
        self.params.grads["w"][0] += 2 * np.mean(err * X[:, 0])
        return float(np.mean(err ** 2))


def test_fit_minibatch_is_deterministic_and_learns():
    X = np.linspace(-1, 1, 50)[:, None]
    y = 2 * X[:, 0]
    runs = []
    for _ in range(2):
        m = _Linear()
        tr, va, best = fit_minibatch(m, X, y, SgdConfig(0.2, 8, 30, seed=4), val=(X, y))
        runs.append((m.params["w"].copy(), tr))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]
    assert runs[0][0][0] == pytest.approx(2.0, abs=1e-3)
    assert tr[-1] < tr[0]


def test_fit_minibatch_zero_epochs_leaves_params():
    m = _Linear()
    tr, va, best = fit_minibatch(m, np.ones((4, 1)), np.ones(4), SgdConfig(epochs=0))
    assert tr == [] and m.params["w"][0] == 0.0


@settings(max_examples=30, deadline=None)
@given(shapes=st.lists(st.lists(st.integers(1, 4), min_size=0, max_size=3), min_size=1, max_size=4),
       seed=st.integers(0, 2 ** 31))
def test_param_file_round_trip(shapes, seed):
    rng = np.random.default_rng(seed)
    ps = ParamSet()
    for k, shape in enumerate(shapes):
        ps.add(f"t{k}", rng.normal(size=tuple(shape)))
    back, meta = loads_params(dumps_params(ps, {"note": "x", "k": seed}))
    assert back.equal(ps)
    assert meta == {"note": "x", "k": seed}
    assert all(back[n].shape == ps[n].shape for n in ps.names())


def test_param_file_detects_corruption(tmp_path):
    ps = ParamSet()
    ps.add("w", np.arange(4.0))
    path = save_params(tmp_path / "m.params", ps)
    blob = bytearray(path.read_bytes())
    blob[-3] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError):
        load_params(path)
