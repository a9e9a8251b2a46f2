import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import randomize
from foodchain.adapt import (
    AdaptLossReport, AdaptModel, LossWeights, class_discrepancy, coral, cross_entropy, evaluate_losses, mmd,
    read_feature_csv, softmax, train_multisource, write_feature_csv,
)
from foodchain.numerics import ParamSet, SgdConfig, grad_check
from foodchain.synthetic import moons_domains, two_moons

batches = arrays(float, st.tuples(st.integers(2, 12), st.integers(1, 3)), elements=st.floats(-5, 5))


def test_loss_identities_are_exact():
    rep = AdaptLossReport(0.1, 0.2, 0.3, 0.4)
    assert rep.fd == 0.1 + 0.2
    assert rep.total == rep.fd + 0.3 + 0.4
    row = rep.row()
    assert row["Loss_FD"] == row["Loss_MMD"] + row["Loss_CORAL"]
    assert row["Loss_TOTAL"] == row["Loss_FD"] + row["Loss_CD"] + row["Loss_CL"]


def test_model_report_identities_and_signs():
    srcs, (Xt, _) = moons_domains(seed=1, n_per_domain=40)
    model = AdaptModel(2, 3, (8,), 4, seed=1)
    rep = model.loss_grad([s for s in srcs], Xt)
    assert rep.fd == rep.mmd + rep.coral and rep.total == rep.fd + rep.cd + rep.cl
    assert min(rep.mmd, rep.coral, rep.cd, rep.cl) >= 0


@settings(max_examples=40, deadline=None)
@given(batches)
def test_zero_on_identical_batches(X):
    assert mmd(X, X) <= 1e-10
    assert coral(X, X) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(batches, st.integers(0, 1000))
def test_symmetry_and_nonnegativity(X, seed):
    Y = np.random.default_rng(seed).normal(size=(7, X.shape[1]))
    assert mmd(X, Y) == pytest.approx(mmd(Y, X), abs=1e-12)
    assert coral(X, Y) == pytest.approx(coral(Y, X), abs=1e-12)
    assert mmd(X, Y) >= 0 and coral(X, Y) >= 0


def test_coral_is_translation_invariant():
    X = np.random.default_rng(0).normal(size=(20, 3))
    assert coral(X, X + np.array([5.0, -2.0, 1.0])) <= 1e-12


def test_coral_hand_computed_diagonal_case():
    # +/-1 and +/-sqrt(2) patterns with zero mean give unbiased covariances diag(1,1) and diag(2,1)
    s = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]) * np.sqrt(3 / 4)
    t = s * np.array([np.sqrt(2.0), 1.0])
    assert np.allclose(np.cov(s.T), np.eye(2)) and np.allclose(np.cov(t.T), np.diag([2.0, 1.0]))
    assert coral(s, t) == pytest.approx(0.0625, abs=1e-12)


def test_coral_needs_two_samples():
    with pytest.raises(ValueError):
        coral(np.ones((1, 2)), np.ones((3, 2)))


def test_point_masses_far_apart_approach_two():
    values = [mmd(np.zeros((4, 1)), np.full((4, 1), d), kernel_bandwidths=[1.0]) for d in (1, 3, 10, 40)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(2.0, abs=1e-12)


def test_single_sample_falls_back_to_biased_estimator():
    with pytest.warns(UserWarning, match="biased"):
        v = mmd(np.zeros((1, 1)), np.full((1, 1), 50.0), kernel_bandwidths=[1.0])
    assert v == pytest.approx(2.0)


def test_shifted_gaussians_rank_above_matched_ones():
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        a, b, c = rng.normal(0, 1, (200, 1)), rng.normal(5, 1, (200, 1)), rng.normal(0, 1, (200, 1))
        wins += mmd(a, b) > mmd(a, c)
    assert wins == 100


def test_class_discrepancy_examples():
    p = softmax(np.random.default_rng(0).normal(size=(5, 2)))
    assert class_discrepancy([p, p]) == 0.0
    one = np.tile([1.0, 0.0], (4, 1))
    assert class_discrepancy([one, one[:, ::-1]]) == 2.0
    a = np.array([[0.5, 0.5], [0.9, 0.1]])
    b = np.array([[0.2, 0.8], [0.6, 0.4]])
    c = np.array([[1.0, 0.0], [0.3, 0.7]])
    # pairwise L1 per sample: ab 0.6, 0.6; ac 1.0, 1.2; bc 1.6, 0.6
    assert class_discrepancy([a, b, c]) == pytest.approx((0.6 + 0.6 + 1.0 + 1.2 + 1.6 + 0.6) / 6, abs=1e-15)


def test_class_discrepancy_single_classifier_and_bad_rows():
    with pytest.warns(UserWarning):
        assert class_discrepancy([np.array([[0.3, 0.7]])]) == 0.0
    with pytest.raises(ValueError):
        class_discrepancy([np.array([[0.3, 0.3]]), np.array([[0.5, 0.5]])])


def _holder(*arrays_):
    ps = ParamSet()
    for k, a in enumerate(arrays_):
        ps.add(f"x{k}", a)
    return ps


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mmd_and_coral_gradients(seed):
    rng = np.random.default_rng(seed)
    ps = _holder(rng.normal(size=(6, 3)), rng.normal(1, 1.5, size=(5, 3)))

    def loss_mmd(p):
        v, dx, dy = mmd(p["x0"], p["x1"], kernel_bandwidths=[0.7, 1.4, 2.8], return_grad=True)
        p.grads["x0"] += dx
        p.grads["x1"] += dy
        return v

    def loss_coral(p):
        v, dx, dy = coral(p["x0"], p["x1"], return_grad=True)
        p.grads["x0"] += dx
        p.grads["x1"] += dy
        return v

    assert grad_check(loss_mmd, ps, max_coords=None) < 1e-4
    assert grad_check(loss_coral, ps, max_coords=None) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_class_discrepancy_gradient(seed):
    rng = np.random.default_rng(seed)
    ps = _holder(*(rng.normal(size=(4, 3)) for _ in range(3)))

    def loss(p):
        probs = [softmax(p[f"x{k}"]) for k in range(3)]
        v, dps = class_discrepancy(probs, return_grad=True)
        for k in range(3):
            pk = probs[k]
            p.grads[f"x{k}"] += pk * (dps[k] - np.sum(dps[k] * pk, axis=1, keepdims=True))
        return v

    assert grad_check(loss, ps, max_coords=None) < 1e-4


def test_cross_entropy_gradient():
    rng = np.random.default_rng(0)
    ps = _holder(rng.normal(size=(6, 3)))
    labels = rng.integers(0, 3, 6)

    def loss(p):
        v, g = cross_entropy(p["x0"], labels, return_grad=True)
        p.grads["x0"] += g
        return v

    assert grad_check(loss, ps, max_coords=None) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_adapt_model_end_to_end_gradients(seed):
    rng = np.random.default_rng(seed)
    model = AdaptModel(3, 3, (6,), 5, seed=seed)
    randomize(model.params, seed)
    sources = [(rng.normal(k, 1, (6, 3)), rng.integers(0, 2, 6)) for k in range(3)]
    target = rng.normal(0.5, 1.2, (7, 3))
    bws = [1.0, 2.0, 4.0]
    assert grad_check(lambda p: model.loss_grad(sources, target, bandwidths=bws).total, model.params) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_feature_discrepancy_falls_during_training(seed):
    # same distribution on both sides; the classification term is switched off because it
    # grows the feature scale, which CORAL is not invariant to
    rng = np.random.default_rng(seed)
    X, y = two_moons(300, rng)
    Xt, _ = two_moons(300, rng)
    result = train_multisource([(X, y)], Xt, SgdConfig(0.1, 32, 20, seed=seed), weights=LossWeights(cl=0.0))
    before = evaluate_losses(AdaptModel(2, 1, seed=seed), [(X, y)], Xt)
    after = evaluate_losses(result.model, [(X, y)], Xt)
    assert after.fd < before.fd
    assert len(result.curve) == 20 and result.curve_csv().startswith("epoch,")


def test_training_is_reproducible_and_scores_target():
    srcs, (Xt, yt) = moons_domains(seed=3, n_per_domain=60)
    cfg = SgdConfig(0.3, 16, 3, seed=3)
    a = train_multisource(srcs, Xt, cfg, yt)
    b = train_multisource(srcs, Xt, cfg, yt)
    assert a.model.params.equal(b.model.params)
    assert a.target_accuracy == b.target_accuracy
    assert 0 <= a.target_accuracy <= 1


def test_feature_csv_round_trip(tmp_path):
    domains = {"s1": (np.array([[1.0, 2.0], [3.0, 4.5]]), np.array([0, 1])),
               "t": (np.array([[0.5, -1.0]]), np.array([-1]))}
    p = tmp_path / "f.csv"
    write_feature_csv(p, domains)
    back = read_feature_csv(p)
    assert list(back) == ["s1", "t"]
    for k in domains:
        assert np.array_equal(back[k][0], domains[k][0]) and np.array_equal(back[k][1], domains[k][1])
