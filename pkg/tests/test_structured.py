import numpy as np
import pytest

from sensorimotor.exceptions import ContractError, StepSizeError
from sensorimotor.plants import CameraArmPlant, regressor_for
from sensorimotor.structured import (
    FitSchedule,
    ObservationYX,
    RegressorModel,
    StructuredJacobianEstimator,
    cost_U,
    fit,
    grad_U,
    jacobian_from_parameters,
    stable_gain,
    update_parameters,
)

from conftest import central_fd_gradient


def scalar_affine():
    # y = pi0 * x + pi1
    return RegressorModel(2, 1, 1, lambda x: np.array([[x[0], 1.0]]))


def test_cost_U_examples():
    reg = scalar_affine()
    data = [ObservationYX([1.0], [0.0]), ObservationYX([3.0], [1.0])]
    assert cost_U(data, [2.0, 1.0], 1.0, reg) == 0.0
    # residuals -1 and -3
    assert cost_U(data, [0.0, 0.0], 2.0, reg) == pytest.approx(10.0)


def test_grad_U_matches_finite_differences(rng):
    reg = regressor_for(CameraArmPlant())
    data = [ObservationYX(rng.normal(300, 50, 2), rng.uniform(-1, 1, 3)) for _ in range(8)]
    pi = rng.standard_normal(reg.p)
    fd = central_fd_gradient(lambda p: cost_U(data, p, 0.1, reg), pi, h=1e-4)
    g = grad_U(data, pi, 0.1, reg)
    assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)


def test_update_parameters_is_one_gradient_step(rng):
    reg = scalar_affine()
    data = [ObservationYX([2.0], [1.0])]
    pi = np.array([0.5, 0.5])
    np.testing.assert_allclose(update_parameters(pi, data, 0.1, reg), pi - grad_U(data, pi, 0.1, reg))


def test_fit_recovers_affine_parameters():
    reg = scalar_affine()
    data = [ObservationYX([3.0 * x - 2.0], [x]) for x in np.linspace(-1, 1, 7)]
    pi = fit(data, np.zeros(2), FitSchedule(grad_tol=1e-13), reg)
    np.testing.assert_allclose(pi, [3.0, -2.0], atol=1e-10)


def test_fit_diverging_gain_raises():
    reg = scalar_affine()
    data = [ObservationYX([3.0 * x], [x]) for x in np.linspace(-2, 2, 5)]
    gamma = 10.0 * stable_gain(data, reg)
    with pytest.raises(StepSizeError):
        fit(data, np.zeros(2), FitSchedule(gamma=gamma), reg)


def test_regressor_shape_checked():
    bad = RegressorModel(3, 1, 1, lambda x: np.zeros((1, 2)))
    with pytest.raises(ContractError):
        bad(np.zeros(1))


def test_finite_difference_jacobian_fallback(rng):
    plant = CameraArmPlant()
    analytic = regressor_for(plant)
    numeric = RegressorModel(analytic.p, analytic.m, analytic.n, analytic.evaluate)
    x = rng.uniform(-1, 1, 3)
    pi = plant.true_parameters
    np.testing.assert_allclose(
        jacobian_from_parameters(numeric, x, pi), jacobian_from_parameters(analytic, x, pi), atol=1e-6
    )


def test_estimator_api(rng):
    plant = CameraArmPlant()
    X = rng.uniform(-1, 1, (20, 3))
    Y = np.stack([plant.feature_map(x) for x in X])
    est = StructuredJacobianEstimator(regressor_for(plant), grad_tol=1e-12).fit(X, Y)
    np.testing.assert_allclose(est.pi_, plant.true_parameters, atol=1e-6)
    np.testing.assert_allclose(est.predict(X), Y, atol=1e-6)
    np.testing.assert_allclose(est.jacobian(X[0]), plant.jacobian(X[0]), atol=1e-6)
    assert est.diagnostic == est.cost_
    assert est.get_params()["grad_tol"] == 1e-12
    with pytest.raises(ContractError):
        est.fit(X, Y[:5])
