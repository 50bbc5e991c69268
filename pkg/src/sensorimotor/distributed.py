"""Distributed Jacobian estimation over a network of computing units.

Each unit owns an anchor configuration and a local Jacobian fitted to the
observations in a Gaussian-weighted ball around the anchor. The controller
queries the unit whose anchor is nearest the current configuration.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import as_matrix, as_vector, check_positive
from .exceptions import (
    ContractError,
    EmptyNeighborhoodError,
    InvalidInputError,
    StepSizeError,
    UntrainedRegionError,
)
from .instant import ObservationDU, cost_V
from .structured import DIVERGENCE_PATIENCE, FitSchedule

logger = logging.getLogger(__name__)

DEFAULT_H_MIN = math.exp(-4.5)  # 3-sigma ball
STRATEGIES = ("uniform-grid", "random", "data-kmeans")
KMEANS_ITERS = 100


@dataclass(frozen=True)
class ComputingUnit:
    anchor: np.ndarray
    local_jacobian: np.ndarray
    trained: bool = False

    def __post_init__(self):
        anchor = as_vector(self.anchor, "anchor")
        jac = as_matrix(self.local_jacobian, "local_jacobian")
        if jac.shape[1] != anchor.shape[0]:
            raise ContractError(f"Jacobian shape {jac.shape} does not match anchor length {anchor.shape[0]}")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "local_jacobian", jac)


@dataclass(frozen=True)
class UnitNetwork:
    units: list = field(default_factory=list)
    sigma: float = 1.0
    h_min: float = DEFAULT_H_MIN

    def __post_init__(self):
        if len(self.units) == 0:
            raise InvalidInputError("a network needs at least one unit")
        check_positive(self.sigma, "sigma")
        if not (0.0 < self.h_min < 1.0):
            raise InvalidInputError(f"h_min must lie in (0, 1), got {self.h_min}")
        shape = self.units[0].local_jacobian.shape
        if any(u.local_jacobian.shape != shape for u in self.units):
            raise ContractError("all units must share the same Jacobian shape")
        object.__setattr__(self, "units", list(self.units))

    @property
    def anchors(self):
        return np.stack([u.anchor for u in self.units])

    @property
    def shape(self):
        return self.units[0].local_jacobian.shape

    @property
    def untrained(self):
        return [i for i, u in enumerate(self.units) if not u.trained]

    def __len__(self):
        return len(self.units)


class LocalizedObservation(NamedTuple):
    """``(delta, u)`` pair together with the pre-motion configuration ``x``."""

    x: np.ndarray
    delta: np.ndarray
    u: np.ndarray


def _as_arrays(data):
    if len(data) == 0:
        raise InvalidInputError("observation set is empty")
    X = np.stack([as_vector(o.x, "x") for o in data])
    D = np.stack([as_vector(o.delta, "delta") for o in data])
    U = np.stack([as_vector(o.u, "u", size=X.shape[1]) for o in data])
    return X, U, D


def _grid_anchors(low, high, counts):
    axes = [np.linspace(lo, hi, int(c)) for lo, hi, c in zip(low, high, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def _min_pairwise_distance(points):
    if len(points) < 2:
        return None
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    dist[np.diag_indices(len(points))] = np.inf
    return float(dist.min())


def _lloyd(samples, k, rng):
    centers = samples[rng.choice(len(samples), size=k, replace=False)].copy()
    for _ in range(KMEANS_ITERS):
        d2 = np.sum((samples[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
        labels = np.argmin(d2, axis=1)
        for j in range(k):
            members = samples[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return centers


def allocate_units(strategy, domain, count, m, seed=0, sigma=None, h_min=DEFAULT_H_MIN):
    """Place computing units with zero-initialised local Jacobians.

    Parameters
    ----------
    strategy : {"uniform-grid", "random", "data-kmeans"}
    domain : (low, high) pair for box strategies, or an array of visited
        configurations of shape ``(T, n)`` for ``"data-kmeans"``.
    count : int or sequence of int
        Per-axis counts for the grid (an int is used on every axis);
        total number of units otherwise.
    m : int
        Feature dimension of the local Jacobians.
    sigma : float, optional
        Neighbourhood radius. Defaults to half the smallest inter-anchor
        distance (per-axis spacing for the grid).
    """
    if strategy not in STRATEGIES:
        raise InvalidInputError(f"unknown placement strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    if strategy == "data-kmeans":
        samples = as_matrix(domain, "samples")
        k = int(count)
        if k < 1 or k > len(samples):
            raise InvalidInputError(f"cannot form {k} clusters from {len(samples)} samples")
        anchors = _lloyd(samples, k, rng)
        extent = samples.max(axis=0) - samples.min(axis=0)
    else:
        low, high = (as_vector(b, "domain bound") for b in domain)
        if low.shape != high.shape or np.any(high <= low):
            raise InvalidInputError("domain must be a non-degenerate box")
        extent = high - low
        if strategy == "uniform-grid":
            counts = np.broadcast_to(np.asarray(count, dtype=int), low.shape)
            if np.any(counts < 1):
                raise InvalidInputError("grid counts must be >= 1")
            anchors = _grid_anchors(low, high, counts)
        else:
            if int(count) < 1:
                raise InvalidInputError("count must be >= 1")
            anchors = rng.uniform(low, high, size=(int(count), low.shape[0]))

    if sigma is None:
        if strategy == "uniform-grid" and np.any(counts > 1):
            spacing = extent[counts > 1] / (counts[counts > 1] - 1)
            sigma = 0.5 * float(spacing.min())
        else:
            spacing = _min_pairwise_distance(anchors)
            sigma = 0.5 * (spacing if spacing else float(np.linalg.norm(extent)) or 1.0)

    n = anchors.shape[1]
    units = [ComputingUnit(a, np.zeros((int(m), n))) for a in anchors]
    return UnitNetwork(units, float(sigma), h_min)


def neighborhood_weight(anchor, x, sigma):
    """Gaussian weight ``exp(-||anchor - x||^2 / (2 sigma^2))``."""
    sigma = check_positive(sigma, "sigma")
    d = as_vector(anchor, "anchor") - as_vector(x, "x")
    return math.exp(-float(d @ d) / (2.0 * sigma * sigma))


def _weights(anchor, X, sigma):
    d = X - anchor
    return np.exp(-np.sum(d * d, axis=1) / (2.0 * sigma * sigma))


def _ball(unit, arrays, sigma, h_min):
    X, U, D = arrays
    m, n = unit.local_jacobian.shape
    if X.shape[1] != n or D.shape[1] != m:
        raise ContractError("observations do not match the unit dimensions")
    h = _weights(unit.anchor, X, sigma)
    inside = h >= h_min
    if not np.any(inside):
        raise EmptyNeighborhoodError(f"no observation within the ball of anchor {unit.anchor}")
    return h[inside], U[inside], D[inside]


def _weighted_stats(h, U, D):
    gram = (U * h[:, None]).T @ U  # sum h u u^T
    cross = (D * h[:, None]).T @ U  # sum h delta u^T
    return gram, cross


def cost_W(unit, data, sigma, gamma, h_min=DEFAULT_H_MIN):
    """Local cost ``(gamma/2) sum_{j in B} h_j ||A u_j - delta_j||^2``.

    Raises
    ------
    EmptyNeighborhoodError
        If no observation has weight ``>= h_min``.
    """
    gamma = check_positive(gamma, "gamma")
    h, U, D = _ball(unit, _as_arrays(data), check_positive(sigma, "sigma"), h_min)
    r = U @ unit.local_jacobian.T - D
    return 0.5 * gamma * float(np.sum(h * np.sum(r * r, axis=1)))


def grad_W(unit, data, sigma, gamma, h_min=DEFAULT_H_MIN):
    gamma = check_positive(gamma, "gamma")
    h, U, D = _ball(unit, _as_arrays(data), check_positive(sigma, "sigma"), h_min)
    gram, cross = _weighted_stats(h, U, D)
    return gamma * (unit.local_jacobian @ gram - cross)


def _descend(A, gram, cross, gamma, schedule):
    """Gradient descent on ``(gamma/2) tr(A G A^T) - gamma tr(A C^T) + const``."""

    slack = 1e-13 * gamma * (1.0 + float(np.sum(np.abs(cross))))
    prev = np.inf
    rising = 0
    for _ in range(int(schedule.max_iters)):
        a_gram = A @ gram
        current = 0.5 * gamma * float(np.sum(a_gram * A) - 2.0 * np.sum(A * cross))
        if not np.isfinite(current):
            raise StepSizeError(f"local cost overflowed with gamma={gamma:g}; use a smaller gain")
        rising = rising + 1 if current > prev + slack else 0
        if rising >= DIVERGENCE_PATIENCE:
            raise StepSizeError(
                f"local cost increased for {DIVERGENCE_PATIENCE} iterations with gamma={gamma:g}; "
                "use a smaller gain"
            )
        prev = current
        step = gamma * (a_gram - cross)
        if math.sqrt(np.sum(step * step)) <= schedule.grad_tol:
            break
        A = A - step
    return A


def _unit_gain(gram):
    return 1.0 / float(np.linalg.eigvalsh(gram)[-1])


def _train(unit, arrays, sigma, h_min, schedule):
    h, U, D = _ball(unit, arrays, sigma, h_min)
    gram, cross = _weighted_stats(h, U, D)
    gamma = schedule.gamma if schedule.gamma is not None else _unit_gain(gram)
    A = _descend(unit.local_jacobian.copy(), gram, cross, gamma, schedule)
    return dataclasses.replace(unit, local_jacobian=A, trained=True)


def train_unit(unit, data, sigma, schedule=FitSchedule(), h_min=DEFAULT_H_MIN):
    """Fit a unit's local Jacobian by entrywise gradient descent on its local cost.

    ``schedule.gamma=None`` uses ``1 / lambda_max`` of the weighted Gram
    matrix. Returns a new trained unit; the input is not modified.
    """
    return _train(unit, _as_arrays(data), check_positive(sigma, "sigma"), h_min, schedule)


def train_network(network, data, schedule=FitSchedule()):
    """Train every unit independently on the shared dataset.

    Units whose ball is empty keep their previous Jacobian and trained flag;
    never-trained ones show up in the returned network's ``untrained``.
    """
    arrays = _as_arrays(data)
    units = []
    for index, unit in enumerate(network.units):
        try:
            units.append(_train(unit, arrays, network.sigma, network.h_min, schedule))
        except EmptyNeighborhoodError:
            logger.info("unit %d has an empty neighbourhood; left untrained", index)
            units.append(unit)
    return dataclasses.replace(network, units=units)


def winner(network, x):
    """Index of the unit nearest ``x``; ties go to the lowest index."""
    x = as_vector(x, "x", size=network.anchors.shape[1])
    d = network.anchors - x
    return int(np.argmin(np.sum(d * d, axis=1)))


def query_jacobian(network, x):
    index = winner(network, x)
    unit = network.units[index]
    if not unit.trained:
        raise UntrainedRegionError(f"winning unit {index} at {unit.anchor} was never trained")
    return unit.local_jacobian.copy()


def combined_cost_H(unit, data, current_obs, sigma, gamma, h_min=DEFAULT_H_MIN):
    """Sum of the current-sample cost and the unit's local historical cost.

    An empty historical ball contributes zero.
    """
    v = cost_V(unit.local_jacobian, current_obs, gamma)
    if len(data) == 0:
        return v
    try:
        w = cost_W(unit, data, sigma, gamma, h_min)
    except EmptyNeighborhoodError:
        w = 0.0
    return v + w


def save_network(network, path):
    """Write a network snapshot as flat text with round-trip float precision.

    Line 1 holds ``N n m sigma h_min``; each following line holds one unit's
    anchor, its row-major Jacobian entries and a trained flag (0 or 1).
    """
    m, n = network.shape
    lines = [f"{len(network)} {n} {m} {network.sigma!r} {network.h_min!r}"]
    for unit in network.units:
        values = [repr(float(v)) for v in unit.anchor]
        values += [repr(float(v)) for v in unit.local_jacobian.ravel()]
        values.append("1" if unit.trained else "0")
        lines.append(" ".join(values))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path):
    with open(path) as fh:
        rows = [line.split() for line in fh if line.strip()]
    N, n, m = (int(v) for v in rows[0][:3])
    sigma, h_min = float(rows[0][3]), float(rows[0][4])
    if len(rows) != N + 1:
        raise ContractError(f"snapshot declares {N} units but holds {len(rows) - 1}")
    units = []
    for row in rows[1:]:
        if len(row) != n + m * n + 1:
            raise ContractError(f"malformed unit line with {len(row)} fields")
        values = [float(v) for v in row[:-1]]
        units.append(
            ComputingUnit(
                np.array(values[:n]),
                np.array(values[n:]).reshape(m, n),
                trained=row[-1] == "1",
            )
        )
    return UnitNetwork(units, sigma, h_min)


class DistributedJacobianEstimator(BaseEstimator):
    """Network-of-units Jacobian estimator with an sklearn-style interface.

    ``fit(X, U, D)`` places units (unless ``anchors`` is given) and trains
    them on pre-motion configurations ``X``, commands ``U`` and feature
    changes ``D``. With ``online=True``, ``partial_fit`` takes one gradient
    step of the winner's combined cost (current sample plus its local
    history) per call.
    """

    diagnostic_name = "cost_W"

    def __init__(
        self,
        strategy="uniform-grid",
        domain=None,
        count=3,
        anchors=None,
        sigma=None,
        h_min=DEFAULT_H_MIN,
        gamma=None,
        max_iters=100_000,
        grad_tol=1e-9,
        online=False,
        seed=0,
    ):
        self.strategy = strategy
        self.domain = domain
        self.count = count
        self.anchors = anchors
        self.sigma = sigma
        self.h_min = h_min
        self.gamma = gamma
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.online = online
        self.seed = seed

    def _allocate(self, X, m):
        if self.anchors is not None:
            anchors = check_array(self.anchors)
            sigma = self.sigma
            if sigma is None:
                spacing = _min_pairwise_distance(anchors)
                sigma = 0.5 * spacing if spacing else 1.0
            units = [ComputingUnit(a, np.zeros((m, anchors.shape[1]))) for a in anchors]
            return UnitNetwork(units, float(sigma), self.h_min)
        domain = X if self.strategy == "data-kmeans" else self.domain
        if domain is None:
            domain = (X.min(axis=0), X.max(axis=0))
        return allocate_units(self.strategy, domain, self.count, m, self.seed, self.sigma, self.h_min)

    def fit(self, X, U, D):
        X = check_array(X)
        U = check_array(U)
        D = check_array(D)
        if not (X.shape[0] == U.shape[0] == D.shape[0]):
            raise ContractError("X, U and D must have the same number of rows")
        network = self._allocate(X, D.shape[1])
        schedule = FitSchedule(self.gamma, self.max_iters, self.grad_tol)
        data = [LocalizedObservation(x, d, u) for x, u, d in zip(X, U, D)]
        self.network_ = train_network(network, data, schedule)
        # per-unit sufficient statistics for cheap online refinement
        arrays = (X, U, D)
        self.stats_ = []
        self.costs_ = []
        for unit in self.network_.units:
            try:
                h, Ub, Db = _ball(unit, arrays, self.network_.sigma, self.network_.h_min)
            except EmptyNeighborhoodError:
                self.stats_.append(None)
                self.costs_.append(float("nan"))
                continue
            gram, cross = _weighted_stats(h, Ub, Db)
            gamma = self.gamma if self.gamma is not None else _unit_gain(gram)
            self.stats_.append((gram, cross))
            r = Ub @ unit.local_jacobian.T - Db
            self.costs_.append(0.5 * gamma * float(np.sum(h * np.sum(r * r, axis=1))))
        self.untrained_ = self.network_.untrained
        self.diagnostic_ = float("nan")
        self.n_features_in_ = X.shape[1]
        return self

    def jacobian(self, x):
        check_is_fitted(self, "network_")
        index = winner(self.network_, x)
        self.diagnostic_ = self.costs_[index]
        return query_jacobian(self.network_, x)

    def predict(self, X, U):
        """Predicted feature changes using each row's winning local Jacobian."""
        check_is_fitted(self, "network_")
        X = check_array(X)
        U = check_array(U)
        return np.stack([query_jacobian(self.network_, x) @ u for x, u in zip(X, U)])

    def winners(self, X):
        check_is_fitted(self, "network_")
        return np.array([winner(self.network_, x) for x in check_array(X)])

    def partial_fit(self, x, u, delta):
        check_is_fitted(self, "network_")
        if not self.online:
            return self
        index = winner(self.network_, x)
        unit = self.network_.units[index]
        u = as_vector(u, "u")
        uu = float(u @ u)
        if self.stats_[index] is None or uu < 1e-18:
            return self
        gram, cross = self.stats_[index]
        obs = ObservationDU(as_vector(delta, "delta"), u)
        gamma = 1.0 / (float(np.linalg.eigvalsh(gram)[-1]) + uu)
        A = unit.local_jacobian
        step = gamma * (np.outer(A @ u - obs.delta, u) + A @ gram - cross)
        units = list(self.network_.units)
        units[index] = dataclasses.replace(unit, local_jacobian=A - step)
        self.network_ = dataclasses.replace(self.network_, units=units)
        self.diagnostic_ = cost_V(A, obs, gamma)
        return self

    @property
    def diagnostic(self):
        return getattr(self, "diagnostic_", float("nan"))
