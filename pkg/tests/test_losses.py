import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrdp.data import Dataset
from corrdp.errors import AssumptionError, ParameterError, ShapeError
from corrdp.losses import (LossSpec, accuracy, gradient_difference_bound, lipschitz_constant,
                           loss_gradient, loss_value, mean_gradient, objective,
                           smoothness_constants, with_derived_lipschitz)

SQ = LossSpec("squared")
LOG = LossSpec("logistic")


def test_loss_values():
    assert loss_value(SQ, np.zeros(3), np.ones(3), 0.0) == 0.0
    assert loss_value(LOG, np.zeros(3), np.array([5.0, -2.0, 1.0]), 1.0) == pytest.approx(math.log(2))
    assert loss_value(SQ, np.array([1.0, 1.0]), np.array([1.0, 2.0]), 2.0) == pytest.approx(1.0)


def test_loss_errors():
    with pytest.raises(ShapeError):
        loss_value(SQ, np.zeros(2), np.zeros(3), 0.0)
    with pytest.raises(ShapeError):
        loss_gradient(LOG, np.zeros(2), np.zeros(3), 0.0)
    with pytest.raises(ParameterError):
        loss_value(LOG, np.zeros(2), np.zeros(2), 0.5)
    with pytest.raises(ParameterError):
        LossSpec("hinge")
    with pytest.raises(ParameterError):
        LossSpec("ridge", reg=-1.0)
    with pytest.raises(ParameterError):
        LossSpec(D=0.0)


def _fd_grad(spec, theta, x, y, h=1e-5):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (loss_value(spec, theta + e, x, y) - loss_value(spec, theta - e, x, y)) / (2 * h)
    return g


@pytest.mark.parametrize("spec", [SQ, LOG], ids=["squared", "logistic"])
def test_gradient_matches_finite_differences(spec):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        theta = rng.normal(size=5)
        x = rng.normal(size=5)
        y = float(rng.integers(0, 2)) if spec.kind == "logistic" else float(rng.normal())
        g = loss_gradient(spec, theta, x, y)
        fd = _fd_grad(spec, theta, x, y)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-8))
    assert worst <= 1e-6


def test_logistic_gradient_at_zero():
    x = np.array([1.0, -3.0, 0.5])
    np.testing.assert_allclose(loss_gradient(LOG, np.zeros(3), x, 1.0), -0.5 * x)
    np.testing.assert_allclose(loss_gradient(LOG, np.zeros(3), x, 0.0), 0.5 * x)


def test_clipping_exact_norm():
    spec = LossSpec("squared", clip=1.0)
    # residual 2 * (0 - 5) = -10 on a unit vector gives a gradient of norm 10
    x = np.array([0.6, 0.8])
    assert np.linalg.norm(loss_gradient(SQ, np.zeros(2), x, 5.0)) == pytest.approx(10.0)
    assert np.linalg.norm(loss_gradient(spec, np.zeros(2), x, 5.0)) == pytest.approx(1.0, abs=1e-15)
    small = loss_gradient(spec, np.zeros(2), x, 0.1)
    np.testing.assert_allclose(small, loss_gradient(SQ, np.zeros(2), x, 0.1))


def test_mean_gradient_matches_per_sample():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 4))
    y = rng.normal(size=40)
    th = rng.normal(size=4)
    for spec in (SQ, LossSpec("squared", clip=0.5), LossSpec("ridge", reg=0.3)):
        per = np.mean([loss_gradient(spec, th, X[i], y[i]) for i in range(40)], axis=0)
        per = per + 2 * spec.ridge_weight(40) * th
        np.testing.assert_allclose(mean_gradient(spec, th, X, y), per, rtol=1e-12, atol=1e-14)


def test_objective_ridge_term():
    X = np.eye(2)
    y = np.zeros(2)
    th = np.array([1.0, 2.0])
    assert objective(SQ, th, X, y) == pytest.approx(2.5)
    assert objective(LossSpec("ridge"), th, X, y) == pytest.approx(2.5 + 5 / 2)


def test_smoothness_constants_examples():
    C1, C2 = smoothness_constants(SQ, 1.0, 1.0, 100)
    assert C1 == pytest.approx(4.02) and C2 == pytest.approx(2.0)
    C1, C2 = smoothness_constants(LOG, 1.0, 1.0, 100)
    assert C1 == pytest.approx(2.0025) and C2 == pytest.approx(0.25)
    # vanishing correction for large m
    assert smoothness_constants(SQ, 3.0, 1.0, 10 ** 12)[0] == pytest.approx(12.0)
    assert smoothness_constants(LOG, 3.0, 1.0, 10 ** 12)[0] == pytest.approx(2.0)


def test_smoothness_boundary_violation():
    th = np.zeros(10)
    th[3] = 0.5
    with pytest.raises(AssumptionError, match="theta_4"):
        smoothness_constants(SQ, 1.0, 1.0, 10, theta=th)
    th[3] = 0.1
    smoothness_constants(SQ, 1.0, 1.0, 10, theta=th)


def test_lipschitz_constants():
    assert lipschitz_constant("squared", 2.0, 1.0, 3.0) == 16.0
    assert lipschitz_constant("logistic", 2.0, 1.0) == 4.0
    d = Dataset(np.array([[3.0, 4.0], [0.0, 1.0]]), np.array([-2.0, 1.0]))
    assert with_derived_lipschitz(LossSpec("ridge", D=1.0), d).L == pytest.approx(2 * 5 * 3)
    assert with_derived_lipschitz(LossSpec("ridge", L=7.0), d).L == 7.0


def _ball(rng, m, r):
    v = rng.normal(size=m)
    return v / np.linalg.norm(v) * r * rng.random() ** (1 / m)


@pytest.mark.parametrize("kind", ["squared", "logistic"])
def test_clipped_gradient_bounded_by_L(kind):
    rng = np.random.default_rng(5)
    B, D, m = 1.0, 1.0, 6
    L = lipschitz_constant(kind, B, D, 1.0)
    clipped = LossSpec(kind, D=D, clip=L)
    for _ in range(500):
        th, x = _ball(rng, m, D), _ball(rng, m, B)
        y = float(rng.integers(0, 2)) if kind == "logistic" else rng.uniform(-1, 1)
        assert np.linalg.norm(loss_gradient(clipped, th, x, y)) <= L + 1e-12
        # on the bounded domain the unclipped gradient already obeys the bound
        assert np.linalg.norm(loss_gradient(LossSpec(kind, D=D), th, x, y)) <= L + 1e-12
    # far outside it only the clip keeps the norm down
    x = np.full(m, 10.0)
    assert np.linalg.norm(loss_gradient(clipped, np.zeros(m), x, 1.0 if kind == "logistic" else 50.0)) \
        == pytest.approx(L)


@pytest.mark.parametrize("kind", ["squared", "logistic"])
def test_gradient_difference_assumption(kind):
    rng = np.random.default_rng(9)
    B, D, C, m = 1.0, 1.0, 1.0, 10
    spec = LossSpec(kind, D=D, C=C)
    L = lipschitz_constant(kind, B, D, 1.0)
    C1, C2 = smoothness_constants(spec, B, D, m)
    worst = -np.inf
    for _ in range(1000):
        th = rng.uniform(-1, 1, m) * C * D / (m * B)  # inside the boundary condition
        x1, x2 = _ball(rng, m, B), _ball(rng, m, B)
        y = float(rng.integers(0, 2)) if kind == "logistic" else rng.uniform(-1, 1)
        lhs = np.abs(loss_gradient(spec, th, x1, y) - loss_gradient(spec, th, x2, y))
        rhs = gradient_difference_bound(C1, C2, L, x1, x2)
        worst = max(worst, float(np.max(lhs - rhs)))
    assert worst <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["squared", "logistic"]), st.floats(0, 1))
def test_loss_convex_midpoint(seed, kind, w):
    rng = np.random.default_rng(seed)
    a, b, x = rng.normal(size=(3, 4)) * 3
    y = float(rng.integers(0, 2)) if kind == "logistic" else float(rng.normal())
    spec = LossSpec(kind)
    mid = loss_value(spec, w * a + (1 - w) * b, x, y)
    assert mid <= w * loss_value(spec, a, x, y) + (1 - w) * loss_value(spec, b, x, y) + 1e-9


def test_accuracy():
    X = np.array([[1.0], [-1.0], [2.0]])
    assert accuracy(np.array([1.0]), X, np.array([1.0, 0.0, 0.0])) == pytest.approx(2 / 3)
