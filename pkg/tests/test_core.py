import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sensorimotor.core import (
    GainSettings,
    apply_command,
    cost_J,
    predict_feature,
    pseudo_inverse_solve,
    saturate,
    servo_command,
    to_velocity,
)
from sensorimotor.exceptions import ContractError, InvalidInputError, SingularityError

from conftest import full_rank

BIG = 1e6
finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_saturate_examples():
    np.testing.assert_array_equal(saturate([0.1, 0.0], 1.0), [0.1, 0.0])
    # ||[3, 4]|| = 5, so each entry scales by 1/5
    np.testing.assert_allclose(saturate([3.0, 4.0], 1.0), [3.0 / 5.0, 4.0 / 5.0], rtol=1e-15)
    np.testing.assert_array_equal(saturate([0.0, 0.0], 1.0), [0.0, 0.0])


def test_saturate_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        saturate([np.nan, 1.0], 1.0)
    with pytest.raises(InvalidInputError):
        saturate([1.0], 0.0)


@given(arrays(float, st.integers(1, 6), elements=finite), st.floats(1e-3, 1e3))
def test_saturate_bounded_and_collinear(e, bound):
    out = saturate(e, bound)
    assert np.linalg.norm(out) <= bound + 1e-12
    norm = np.linalg.norm(e)
    if norm > 0:
        kappa = np.linalg.norm(out) / norm
        assert 0 < kappa <= 1 + 1e-15
        np.testing.assert_allclose(out, kappa * e, atol=1e-12 * (1 + norm))


def test_apply_command():
    np.testing.assert_array_equal(apply_command([0, 0], [0.1, -0.2]), [0.1, -0.2])
    np.testing.assert_array_equal(apply_command([1, 1], [0, 0]), [1, 1])
    np.testing.assert_array_equal(apply_command([0.5], [-0.5]), [0.0])
    with pytest.raises(ContractError):
        apply_command([0, 0], [1, 2, 3])


def test_to_velocity():
    np.testing.assert_allclose(to_velocity([0.1], 0.05), [2.0])
    np.testing.assert_array_equal(to_velocity([0, 0], 0.3), [0, 0])
    np.testing.assert_array_equal(to_velocity([1, 2], 1.0), [1, 2])
    with pytest.raises(InvalidInputError):
        to_velocity([1.0], 0.0)


def test_predict_feature():
    np.testing.assert_allclose(predict_feature([1.0], [[2.0]], [0.5]), [2.0])
    np.testing.assert_array_equal(predict_feature([1, 1], np.zeros((2, 3)), [4, 5, 6]), [1, 1])
    np.testing.assert_array_equal(predict_feature([0, 0], np.eye(2), [0.3, -0.7]), [0.3, -0.7])
    with pytest.raises(ContractError):
        predict_feature([0, 0], np.eye(3), [1, 2, 3])


def test_cost_J_examples(rng):
    gains = GainSettings(lam=0.7, u_max=BIG)
    e = rng.standard_normal(2)
    u = -gains.lam * saturate(e, gains.sat_bound)
    assert cost_J(np.eye(2), u, e, np.zeros(2), gains) == pytest.approx(0.0, abs=1e-24)

    assert cost_J(np.zeros((2, 2)), [1, 1], [3, 4], [0, 0], GainSettings(lam=1.0, u_max=BIG)) == pytest.approx(25.0)
    # ||0.5 * [2, 0]||^2 = 1
    assert cost_J(np.eye(2), [0, 0], [2, 0], [0, 0], GainSettings(lam=0.5, u_max=BIG)) == pytest.approx(1.0)


def test_error_bound_overrides_u_max():
    gains = GainSettings(lam=1.0, u_max=0.1, error_bound=BIG)
    assert cost_J(np.zeros((2, 2)), [0, 0], [3, 4], [0, 0], gains) == pytest.approx(25.0)
    assert GainSettings(u_max=0.1).sat_bound == 0.1


@pytest.mark.parametrize("kwargs", [{"lam": 0}, {"u_max": -1}, {"damping": -1e-3}, {"dt": 0}])
def test_gain_settings_validation(kwargs):
    with pytest.raises(InvalidInputError):
        GainSettings(**kwargs)


def test_servo_command_examples():
    gains = GainSettings(lam=0.5, u_max=BIG, damping=0.0)
    np.testing.assert_allclose(servo_command(np.eye(2), [1.0, 0.2], [0, 0], gains), [-0.5, -0.1], rtol=1e-14)

    gains = GainSettings(lam=1.0, u_max=BIG, damping=0.0)
    A = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    np.testing.assert_allclose(servo_command(A, [0.3, -0.8], [0, 0], gains), [-0.3, 0.8, 0.0], atol=1e-15)

    # (A^T A)^-1 A^T e = (1/2) * 2
    np.testing.assert_allclose(servo_command([[1.0], [1.0]], [2.0, 0.0], [0, 0], gains), [-1.0], rtol=1e-14)


def test_servo_command_final_saturation():
    gains = GainSettings(lam=1.0, u_max=0.1, damping=0.0, error_bound=BIG)
    u = servo_command(np.eye(2), [3.0, 4.0], [0, 0], gains)
    np.testing.assert_allclose(u, [-0.06, -0.08], rtol=1e-14)


@pytest.mark.parametrize(
    "A, branch",
    [
        (np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]), "right"),
        (np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]), "left"),
        (np.array([[1.0, 2.0], [2.0, 4.0]]), "inverse"),
    ],
)
def test_servo_command_singular(A, branch):
    gains = GainSettings(lam=1.0, u_max=BIG, damping=0.0)
    with pytest.raises(SingularityError) as info:
        servo_command(A, np.ones(A.shape[0]), np.zeros(A.shape[0]), gains)
    assert info.value.branch == branch
    assert branch in str(info.value)


def test_damping_keeps_singular_case_total():
    gains = GainSettings(lam=1.0, u_max=BIG, damping=1e-6)
    u = servo_command([[1.0, 2.0], [2.0, 4.0]], [1.0, 2.0], [0, 0], gains)
    assert np.all(np.isfinite(u))


def test_servo_command_shape_mismatch():
    with pytest.raises(ContractError):
        servo_command(np.eye(2), [1, 2, 3], [0, 0, 0], GainSettings())


def test_right_branch_exact_and_minimum_norm(rng):
    gains = GainSettings(lam=0.8, u_max=BIG, damping=0.0, error_bound=BIG)
    for _ in range(20):
        m = int(rng.integers(1, 4))
        n = m + int(rng.integers(1, 3))
        A = full_rank(rng, m, n)
        e = rng.standard_normal(m)
        u = servo_command(A, e, np.zeros(m), gains, final_saturation=False)
        target = gains.lam * saturate(e, gains.sat_bound)
        assert np.linalg.norm(A @ u + target) <= 1e-10 * (1 + np.linalg.norm(target))
        null = np.linalg.svd(A)[2][m:].T
        for _ in range(5):
            w = null @ rng.standard_normal(n - m)
            w /= np.linalg.norm(w)
            alpha = rng.uniform(0.01, 2.0) * rng.choice([-1, 1])
            assert np.linalg.norm(u + alpha * w) > np.linalg.norm(u)


def test_branch_agreement_square(rng):
    for _ in range(20):
        n = int(rng.integers(1, 6))
        A = full_rank(rng, n, n, max_cond=100)
        rhs = rng.standard_normal(n)
        ref = pseudo_inverse_solve(A, rhs, 0.0, "inverse")
        for branch in ("right", "left"):
            np.testing.assert_allclose(pseudo_inverse_solve(A, rhs, 0.0, branch), ref, rtol=1e-10, atol=1e-12)


def test_left_branch_solves_normal_equation(rng):
    gains = GainSettings(lam=1.0, u_max=BIG, damping=0.0, error_bound=BIG)
    A = full_rank(rng, 5, 2)
    e = rng.standard_normal(5)
    u = servo_command(A, e, np.zeros(5), gains)
    np.testing.assert_allclose(A.T @ A @ u, -gains.lam * A.T @ e, atol=1e-12)


def test_linear_closed_loop_decay(rng):
    lam = 0.4
    gains = GainSettings(lam=lam, u_max=BIG, damping=0.0, error_bound=BIG)
    A = full_rank(rng, 2, 4)
    x = rng.standard_normal(4)
    y_star = rng.standard_normal(2)
    e = A @ x - y_star
    for _ in range(15):
        x = x + servo_command(A, A @ x, y_star, gains)
        e_next = A @ x - y_star
        np.testing.assert_allclose(e_next, (1 - lam) * e, atol=1e-9)
        e = e_next


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_command_does_not_increase_cost(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    n = m + int(rng.integers(0, 3))
    A = full_rank(rng, m, n)
    e = rng.standard_normal(m)
    gains = GainSettings(lam=0.5, u_max=BIG, damping=0.0, error_bound=BIG)
    u = servo_command(A, e, np.zeros(m), gains)
    assert cost_J(A, u, e, np.zeros(m), gains) < cost_J(A, np.zeros(n), e, np.zeros(m), gains)
