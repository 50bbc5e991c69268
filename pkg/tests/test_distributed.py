import math

import numpy as np
import pytest

from sensorimotor.distributed import (
    DEFAULT_H_MIN,
    ComputingUnit,
    DistributedJacobianEstimator,
    LocalizedObservation,
    UnitNetwork,
    allocate_units,
    combined_cost_H,
    cost_W,
    grad_W,
    load_network,
    neighborhood_weight,
    query_jacobian,
    save_network,
    train_network,
    train_unit,
    winner,
)
from sensorimotor.exceptions import EmptyNeighborhoodError, InvalidInputError, UntrainedRegionError
from sensorimotor.instant import ObservationDU, cost_V
from sensorimotor.structured import FitSchedule

from conftest import central_fd_gradient


def linear_data(rng, A, T, low=-1.0, high=1.0):
    m, n = A.shape
    X = rng.uniform(low, high, (T, n))
    U = 0.01 * rng.standard_normal((T, n))
    return [LocalizedObservation(x, A @ u, u) for x, u in zip(X, U)]


def test_neighborhood_weight_examples():
    assert neighborhood_weight([0, 0], [0, 0], 1.0) == 1.0
    assert neighborhood_weight([0.0], [1.0], 1.0) == pytest.approx(math.exp(-0.5))
    # three sigma away sits exactly on the default ball edge
    assert neighborhood_weight([0.0], [3.0], 1.0) == pytest.approx(DEFAULT_H_MIN)
    with pytest.raises(InvalidInputError):
        neighborhood_weight([0.0], [1.0], 0.0)


def test_winner_examples():
    units = [ComputingUnit(np.array(a, float), np.zeros((1, 1))) for a in ([0.0], [1.0], [2.0])]
    net = UnitNetwork(units, 0.5)
    assert winner(net, [0.9]) == 1
    assert winner(net, [0.5]) == 0  # tie goes to the lower index
    assert winner(net, [5.0]) == 2


def test_allocate_grid():
    net = allocate_units("uniform-grid", ([0, 0], [1, 2]), 3, 1)
    assert len(net) == 9
    np.testing.assert_allclose(net.anchors[[0, -1]], [[0, 0], [1, 2]])
    assert net.sigma == pytest.approx(0.25)
    assert all(not u.trained for u in net.units)


def test_allocate_random_is_seeded():
    a = allocate_units("random", ([0, 0], [1, 1]), 10, 2, seed=4)
    b = allocate_units("random", ([0, 0], [1, 1]), 10, 2, seed=4)
    np.testing.assert_array_equal(a.anchors, b.anchors)


def test_allocate_kmeans_on_clusters(rng):
    centres = np.array([[0.0, 0.0], [5.0, 5.0]])
    X = np.concatenate([c + 0.1 * rng.standard_normal((50, 2)) for c in centres])
    net = allocate_units("data-kmeans", X, 2, 1, seed=1)
    found = net.anchors[np.argsort(net.anchors[:, 0])]
    np.testing.assert_allclose(found, centres, atol=0.1)


def test_grad_W_matches_finite_differences(rng):
    A_true = rng.standard_normal((2, 3))
    data = linear_data(rng, A_true, 40)
    unit = ComputingUnit(np.zeros(3), rng.standard_normal((2, 3)))

    def cost(B):
        return cost_W(ComputingUnit(unit.anchor, B), data, 0.6, 50.0)

    fd = central_fd_gradient(cost, unit.local_jacobian)
    g = grad_W(unit, data, 0.6, 50.0)
    assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)


def test_train_unit_recovers_linear_map(rng):
    A = rng.standard_normal((2, 3))
    data = linear_data(rng, A, 60)
    unit = ComputingUnit(np.zeros(3), np.zeros((2, 3)))
    trained = train_unit(unit, data, 0.5, FitSchedule(grad_tol=1e-14))
    assert trained.trained and not unit.trained
    np.testing.assert_allclose(trained.local_jacobian, A, atol=1e-8)


def test_empty_ball_is_reported(rng):
    A = np.eye(2)
    data = linear_data(rng, A, 20, low=0.0, high=0.1)
    far = ComputingUnit(np.array([10.0, 10.0]), np.zeros((2, 2)))
    near = ComputingUnit(np.array([0.05, 0.05]), np.zeros((2, 2)))
    with pytest.raises(EmptyNeighborhoodError):
        train_unit(far, data, 0.1)
    net = train_network(UnitNetwork([near, far], 0.1), data)
    assert net.untrained == [1]
    with pytest.raises(UntrainedRegionError):
        query_jacobian(net, [10.0, 10.0])
    np.testing.assert_allclose(query_jacobian(net, [0.0, 0.0]), A, atol=1e-6)


def test_combined_cost_H(rng):
    A = rng.standard_normal((2, 2))
    data = linear_data(rng, A, 10)
    unit = ComputingUnit(np.zeros(2), np.zeros((2, 2)))
    obs = ObservationDU(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    expected = cost_V(unit.local_jacobian, obs, 2.0) + cost_W(unit, data, 0.5, 2.0)
    assert combined_cost_H(unit, data, obs, 0.5, 2.0) == pytest.approx(expected)
    assert combined_cost_H(unit, [], obs, 0.5, 2.0) == cost_V(unit.local_jacobian, obs, 2.0)
    far = ComputingUnit(np.array([50.0, 50.0]), np.zeros((2, 2)))
    assert combined_cost_H(far, data, obs, 0.5, 2.0) == cost_V(far.local_jacobian, obs, 2.0)


def test_snapshot_round_trip(tmp_path, rng):
    units = [
        ComputingUnit(rng.standard_normal(3), rng.standard_normal((2, 3)), trained=bool(i % 2))
        for i in range(4)
    ]
    net = UnitNetwork(units, 0.123456789, DEFAULT_H_MIN)
    path = tmp_path / "net.txt"
    save_network(net, path)
    back = load_network(path)
    assert back.sigma == net.sigma and back.h_min == net.h_min
    for a, b in zip(net.units, back.units):
        np.testing.assert_array_equal(a.anchor, b.anchor)
        np.testing.assert_array_equal(a.local_jacobian, b.local_jacobian)
        assert a.trained == b.trained


def test_estimator_online_refinement(rng):
    A = rng.standard_normal((2, 2))
    data = linear_data(rng, A, 200)
    X = np.stack([d.x for d in data])
    U = np.stack([d.u for d in data])
    D = np.stack([d.delta for d in data])
    est = DistributedJacobianEstimator(domain=([-1, -1], [1, 1]), count=3, online=True).fit(X, U, D)
    assert est.untrained_ == []
    np.testing.assert_allclose(est.jacobian([0.1, 0.2]), A, atol=1e-6)
    np.testing.assert_array_equal(est.winners([[-1, -1], [1, 1]]), [0, 8])
    np.testing.assert_allclose(est.predict(X[:4], U[:4]), D[:4], atol=1e-8)

    # an online step toward a changed plant reduces that sample's error
    B = A + 0.5
    u = np.array([0.01, -0.02])
    before = np.linalg.norm(est.jacobian([0, 0]) @ u - B @ u)
    est.partial_fit(np.zeros(2), u, B @ u)
    assert np.linalg.norm(est.jacobian([0, 0]) @ u - B @ u) < before
