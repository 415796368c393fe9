import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppcdom.errors import ConfigurationError
from ppcdom.estimator import (BroydenState, RbfBasis, adapt, broyden_update, fit_constant_jacobian,
                              kmeans_centers, make_basis, median_width, predict_jacobian, prefit,
                              rbf_features, zero_weights)


def test_rbf_features_gaussian():
    basis = RbfBasis(np.array([[0.0, 0.0], [1.0, 0.0]]), 2.0)
    theta = rbf_features(np.array([1.0, 0.0]), basis)
    assert theta == pytest.approx([np.exp(-0.25), 1.0])
    with pytest.raises(ValueError):
        rbf_features(np.zeros(3), basis)


def test_basis_validation():
    with pytest.raises(ConfigurationError):
        RbfBasis(np.zeros((2, 2)), [1.0, 0.0])


def test_kmeans_two_blobs():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 0.05, (40, 2))
    b = rng.normal(0, 0.05, (40, 2)) + [5, 5]
    centers = kmeans_centers(np.vstack([a, b]), 2, seed=1)
    centers = centers[np.argsort(centers[:, 0])]
    assert np.allclose(centers[0], a.mean(axis=0))
    assert np.allclose(centers[1], b.mean(axis=0))
    with pytest.raises(ConfigurationError):
        kmeans_centers(a[:1], 2)


def test_median_width():
    centers = np.array([[0, 0], [3, 0], [0, 4]], dtype=float)
    # pairwise distances 3, 4, 5
    assert median_width(centers, scale=1.5) == pytest.approx(6.0)
    one = median_width(centers[:1], samples=np.array([[1, 0], [2, 0], [3, 0]]), scale=1.0)
    assert one == pytest.approx(2.0)


def test_predict_jacobian_layout():
    w = zero_weights(2, 3)
    w[1, 4, :, 2] = [1.0, 2.0, 0.0]  # keypoint 1, control 4, coordinate z
    jac = predict_jacobian(w, np.array([1.0, 1.0, 5.0]))
    expected = np.zeros((6, 12))
    expected[5, 4] = 3.0
    assert np.array_equal(jac, expected)


def test_adapt_pure_decay():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(2, 12, 4, 3))
    out = adapt(w, rng.random(4), rng.normal(size=12), np.zeros(6), gamma=0.1, dt=0.05)
    assert np.allclose(out, 0.995 * w, rtol=0, atol=1e-12)


def test_adapt_data_term():
    theta = np.array([1.0, 0.5])
    u = np.zeros(12)
    u[3] = 2.0
    z = np.array([1.0, 0, 0, 0, 0, -1.0])
    out = adapt(zero_weights(2, 2), theta, u, z, gamma=0.0, dt=0.1, gain=0.5)
    expected = zero_weights(2, 2)
    expected[0, 3, :, 0] = 0.1 * 0.5 * 2.0 * theta
    expected[1, 3, :, 2] = -0.1 * 0.5 * 2.0 * theta
    assert np.allclose(out, expected)


def test_adapt_projection_and_validation():
    w = np.ones((1, 12, 2, 3))
    out = adapt(w, np.ones(2), np.ones(12), np.ones(3) * 1e6, 0.0, 1.0, max_norm=10.0)
    assert np.linalg.norm(out) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        adapt(w, np.ones(2), np.ones(12), np.full(3, np.nan), 0.0, 0.1)
    with pytest.raises(ValueError):
        adapt(w, np.ones(2), np.ones(12), np.ones(3), -1.0, 0.1)
    with pytest.raises(ValueError):
        adapt(w, np.ones(2), np.ones(12), np.ones(3), 0.0, 0.0)


def test_adaptation_reduces_prediction_error_direction():
    """The data term moves J_hat u along z: with z = J_hat u - p_dot the error shrinks."""
    rng = np.random.default_rng(5)
    basis = RbfBasis(rng.normal(size=(4, 3)), 2.0)
    x = rng.normal(size=3)
    theta = rbf_features(x, basis)
    j_true = rng.normal(size=(3, 12))
    w = zero_weights(1, 4)
    u = rng.normal(size=12)
    err0 = np.linalg.norm(predict_jacobian(w, theta) @ u - j_true @ u)
    for _ in range(50):
        z = j_true @ u - predict_jacobian(w, theta) @ u
        w = adapt(w, theta, u, z, 0.0, 0.01)
    assert np.linalg.norm(predict_jacobian(w, theta) @ u - j_true @ u) < 0.1 * err0


def test_prefit_recovers_linear_map():
    """Samples at one configuration: theta is constant, so the fit is exact."""
    rng = np.random.default_rng(2)
    j_true = rng.normal(size=(6, 12))
    x = np.tile(rng.normal(size=5), (60, 1))
    u = rng.uniform(-0.03, 0.03, (60, 12))
    pdot = u @ j_true.T
    basis = RbfBasis(x[0] + rng.normal(0, 0.3, (4, 5)), 1.0)
    w = prefit(x, u, pdot, basis, ridge=1e-12)
    assert np.allclose(predict_jacobian(w, rbf_features(x[0], basis)), j_true, atol=1e-6)
    with pytest.raises(ValueError):
        prefit(x[:3], u[:2], pdot[:3], basis)


def test_prefit_dual_form_interpolates():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 2))
    u = rng.normal(size=(10, 12))
    pdot = rng.normal(size=(10, 3))
    basis = make_basis(x, 3, seed=0)
    w = prefit(x, u, pdot, basis, ridge=1e-10)  # 10 samples < 36 unknowns
    pred = np.array([predict_jacobian(w, rbf_features(xi, basis)) @ ui for xi, ui in zip(x, u)])
    assert np.allclose(pred, pdot, atol=1e-6)


def test_fit_constant_jacobian():
    rng = np.random.default_rng(4)
    j_true = rng.normal(size=(3, 12))
    u = rng.normal(size=(40, 12))
    assert np.allclose(fit_constant_jacobian(u, u @ j_true.T, ridge=1e-12), j_true)


def test_broyden_secant_and_skip():
    rng = np.random.default_rng(6)
    state = BroydenState(rng.normal(size=(6, 12)))
    dq, dp = rng.normal(size=12), rng.normal(size=6)
    new = broyden_update(state, dp, dq)
    assert np.allclose(new.jacobian @ dq, dp, atol=1e-12)
    # rank one: directions orthogonal to dq are untouched
    v = rng.normal(size=12)
    v -= (v @ dq) / (dq @ dq) * dq
    assert np.allclose(new.jacobian @ v, state.jacobian @ v)
    assert broyden_update(state, dp, np.zeros(12)) is state


def test_broyden_damping():
    state = BroydenState(np.zeros((1, 1)), damping=0.5)
    assert broyden_update(state, np.array([2.0]), np.array([1.0])).jacobian[0, 0] == 1.0
    with pytest.raises(ConfigurationError):
        BroydenState(np.zeros((1, 1)), damping=0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_broyden_secant_property(seed):
    rng = np.random.default_rng(seed)
    state = BroydenState(rng.normal(size=(9, 12)))
    for _ in range(10):
        dq = rng.normal(size=12) * 10 ** rng.uniform(-3, 0)
        dp = rng.normal(size=9)
        state = broyden_update(state, dp, dq)
        assert np.allclose(state.jacobian @ dq, dp, rtol=0, atol=1e-10)
