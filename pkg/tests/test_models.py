"""Flat-parameter classifiers: init, gradients, and prediction."""

import math

import numpy as np
import pytest

from aerialfl.models import build_model, mlp_one_hidden, multinomial_logistic


def _directional_check(model, w, x, y, rng, *, eps=1e-6, rel=1e-6):
    """Central finite differences along random directions vs the gradient."""
    _, grad = model.loss_and_grad(w, x, y)
    for _ in range(5):
        direction = rng.normal(size=w.size)
        direction /= np.linalg.norm(direction)
        plus, _ = model.loss_and_grad(w + eps * direction, x, y)
        minus, _ = model.loss_and_grad(w - eps * direction, x, y)
        numeric = (plus - minus) / (2.0 * eps)
        analytic = float(grad @ direction)
        assert numeric == pytest.approx(analytic, rel=rel, abs=1e-9)


def _toy_problem(rng, n=60, n_features=8, n_classes=4):
    x = rng.normal(size=(n, n_features))
    y = rng.integers(n_classes, size=n)
    return x, y


def test_logistic_zero_init_gives_log_k_loss(rng):
    model = multinomial_logistic(8, 4)
    assert model.n_params == 9 * 4
    w = model.init(rng)
    np.testing.assert_array_equal(w, np.zeros(model.n_params))
    assert model.init(None) is not w  # fresh array either way
    x, y = _toy_problem(rng)
    loss, grad = model.loss_and_grad(w, x, y)
    assert loss == pytest.approx(math.log(4), rel=1e-12)
    assert grad.shape == (model.n_params,)


def test_logistic_gradient_matches_finite_differences(rng):
    model = multinomial_logistic(8, 4)
    x, y = _toy_problem(rng)
    w = rng.normal(scale=0.5, size=model.n_params)
    _directional_check(model, w, x, y, rng)


def test_logistic_gradient_step_reduces_loss(rng):
    model = multinomial_logistic(8, 4)
    x, y = _toy_problem(rng)
    w = rng.normal(scale=0.5, size=model.n_params)
    loss, grad = model.loss_and_grad(w, x, y)
    stepped, _ = model.loss_and_grad(w - 0.1 * grad, x, y)
    assert stepped < loss


def test_logistic_predict_shape_and_range(rng):
    model = multinomial_logistic(8, 4)
    x, _ = _toy_problem(rng)
    w = rng.normal(size=model.n_params)
    labels = model.predict(w, x)
    assert labels.shape == (x.shape[0],)
    assert np.all((labels >= 0) & (labels < 4))


def test_mlp_init_requires_generator(rng):
    model = mlp_one_hidden(8, 4, n_hidden=16)
    assert model.n_params == 8 * 16 + 16 + 16 * 4 + 4
    with pytest.raises(ValueError, match="generator"):
        model.init(None)
    w = model.init(rng)
    assert w.shape == (model.n_params,)
    assert np.all(np.isfinite(w))


def test_mlp_gradient_matches_finite_differences(rng):
    model = mlp_one_hidden(8, 4, n_hidden=16)
    x, y = _toy_problem(rng)
    w = model.init(rng)
    # A rectified layer is only piecewise smooth; the fixed seed keeps the
    # probe directions away from the kinks.
    _directional_check(model, w, x, y, rng, rel=1e-5)


def test_mlp_predicts_all_samples(rng):
    model = mlp_one_hidden(8, 4, n_hidden=16)
    x, _ = _toy_problem(rng)
    w = model.init(rng)
    labels = model.predict(w, x)
    assert labels.shape == (x.shape[0],)
    assert np.all((labels >= 0) & (labels < 4))


def test_build_model_dispatch():
    logistic = build_model("multinomial-logistic", 10, 3)
    assert logistic.name == "multinomial-logistic"
    assert logistic.n_params == 11 * 3
    mlp = build_model("mlp-1hidden", 10, 3)
    assert mlp.name == "mlp-1hidden"
    with pytest.raises(ValueError, match="unknown model"):
        build_model("transformer", 10, 3)
