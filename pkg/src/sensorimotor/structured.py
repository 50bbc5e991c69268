"""Structure-based adaptation of linearly parametrised sensor models.

The model ``y = L(x) pi`` has a known regressor ``L`` and unknown parameters
``pi``. Parameters are fitted by batch gradient descent on the quadratic
calibration cost, and the adaptive Jacobian is the configuration derivative
of ``L(x) pi``.
"""

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import as_matrix, as_vector, check_positive
from .exceptions import ContractError, InvalidInputError, StepSizeError

DIVERGENCE_PATIENCE = 10


@dataclass(frozen=True)
class RegressorModel:
    """Known regression matrix ``L(x)`` of shape ``(m, p)``.

    ``evaluate_dx(x, pi)`` returns the ``(m, n)`` derivative of ``L(x) pi``
    with respect to ``x``; when omitted, central differences are used.
    """

    p: int
    m: int
    n: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    evaluate_dx: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        x = as_vector(x, "x", size=self.n)
        return as_matrix(self.evaluate(x), "L(x)", shape=(self.m, self.p))


class ObservationYX(NamedTuple):
    y: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class FitSchedule:
    """Learning gain and stopping rule for gradient descent.

    ``gamma=None`` asks the caller to pick a stable gain from the data
    (see :func:`stable_gain`).
    """

    gamma: Optional[float] = None
    max_iters: int = 100_000
    grad_tol: float = 1e-9

    def __post_init__(self):
        if self.gamma is not None:
            check_positive(self.gamma, "gamma")
        if int(self.max_iters) < 1:
            raise InvalidInputError("max_iters must be >= 1")
        check_positive(self.grad_tol, "grad_tol")


def _stack(data, reg):
    if len(data) == 0:
        raise InvalidInputError("observation set is empty")
    Ls = np.stack([reg(obs.x) for obs in data])
    ys = np.stack([as_vector(obs.y, "y", size=reg.m) for obs in data])
    return Ls, ys


def _residuals(Ls, ys, pi_hat):
    return np.einsum("kmp,p->km", Ls, pi_hat) - ys


def cost_U(data, pi_hat, gamma, reg):
    """Calibration cost ``(gamma/2) sum_k ||L(x_k) pi - y_k||^2``."""
    gamma = check_positive(gamma, "gamma")
    pi_hat = as_vector(pi_hat, "pi_hat", size=reg.p)
    Ls, ys = _stack(data, reg)
    r = _residuals(Ls, ys, pi_hat)
    return 0.5 * gamma * float(np.sum(r * r))


def grad_U(data, pi_hat, gamma, reg):
    gamma = check_positive(gamma, "gamma")
    pi_hat = as_vector(pi_hat, "pi_hat", size=reg.p)
    Ls, ys = _stack(data, reg)
    r = _residuals(Ls, ys, pi_hat)
    return gamma * np.einsum("kmp,km->p", Ls, r)


def update_parameters(pi_hat, data, gamma, reg):
    """One descent step; the step size is carried entirely by ``gamma``."""
    return as_vector(pi_hat, "pi_hat", size=reg.p) - grad_U(data, pi_hat, gamma, reg)


def stable_gain(data, reg):
    """Gain ``1 / lambda_max(sum_k L_k^T L_k)``, safely inside the stable range."""
    Ls, _ = _stack(data, reg)
    gram = np.einsum("kmp,kmq->pq", Ls, Ls)
    top = float(np.linalg.eigvalsh(gram)[-1])
    if top <= 0:
        raise InvalidInputError("regressor is identically zero on the data")
    return 1.0 / top


def fit(data, pi0, schedule, reg):
    """Iterate :func:`update_parameters` until the gradient is small.

    Regressor matrices are evaluated once and folded into a ``p x p`` Gram
    matrix, so each iteration is a single matrix-vector product.

    Raises
    ------
    StepSizeError
        If the cost grows for ten consecutive iterations.
    """
    gamma = schedule.gamma if schedule.gamma is not None else stable_gain(data, reg)
    gamma = check_positive(gamma, "gamma")
    pi_hat = as_vector(pi0, "pi0", size=reg.p).copy()
    Ls, ys = _stack(data, reg)
    # normal-equation pieces: grad = gamma * (G pi - c)
    gram = np.einsum("kmp,kmq->pq", Ls, Ls)
    rhs = np.einsum("kmp,km->p", Ls, ys)
    yy = float(np.sum(ys * ys))

    slack = 1e-13 * gamma * (yy + 1.0)  # rounding in the expanded quadratic near the minimum
    prev = np.inf
    rising = 0
    for _ in range(int(schedule.max_iters)):
        g_pi = gram @ pi_hat
        current = 0.5 * gamma * (pi_hat @ g_pi - 2.0 * (pi_hat @ rhs) + yy)
        if not np.isfinite(current):
            raise StepSizeError(f"cost overflowed with gamma={gamma:g}; use a smaller gain")
        rising = rising + 1 if current > prev + slack else 0
        if rising >= DIVERGENCE_PATIENCE:
            raise StepSizeError(
                f"cost increased for {DIVERGENCE_PATIENCE} iterations with gamma={gamma:g}; "
                "use a smaller gain"
            )
        prev = current
        step = gamma * (g_pi - rhs)
        if math.sqrt(step @ step) <= schedule.grad_tol:
            break
        pi_hat = pi_hat - step
    return pi_hat


def central_difference(func, x, steps):
    """Central-difference Jacobian of ``func`` at ``x`` with per-axis steps."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i, h in enumerate(steps):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(func(x + e)) - np.asarray(func(x - e))) / (2 * h))
    return np.column_stack(cols)


def jacobian_from_parameters(reg, x, pi_hat):
    """Adaptive Jacobian ``d/dx {L(x) pi_hat}`` of shape ``(m, n)``."""
    x = as_vector(x, "x", size=reg.n)
    pi_hat = as_vector(pi_hat, "pi_hat", size=reg.p)
    if reg.evaluate_dx is not None:
        return as_matrix(reg.evaluate_dx(x, pi_hat), "dL/dx", shape=(reg.m, reg.n))
    steps = 1e-5 * (1.0 + np.abs(x))
    return central_difference(lambda z: reg(z) @ pi_hat, x, steps)


class StructuredJacobianEstimator(BaseEstimator):
    """Calibration-style Jacobian estimator for a known regressor.

    ``fit(X, Y)`` takes configurations ``X`` of shape ``(T, n)`` and features
    ``Y`` of shape ``(T, m)``; ``jacobian(x)`` then differentiates the fitted
    model at ``x``.
    """

    def __init__(self, regressor=None, gamma=None, max_iters=100_000, grad_tol=1e-9, pi0=None):
        self.regressor = regressor
        self.gamma = gamma
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.pi0 = pi0

    def fit(self, X, Y):
        if self.regressor is None:
            raise InvalidInputError("a RegressorModel is required")
        reg = self.regressor
        X = check_array(X)
        Y = check_array(Y)
        if X.shape[0] != Y.shape[0]:
            raise ContractError("X and Y must have the same number of rows")
        data = [ObservationYX(y, x) for x, y in zip(X, Y)]
        pi0 = np.zeros(reg.p) if self.pi0 is None else self.pi0
        gamma = self.gamma if self.gamma is not None else stable_gain(data, reg)
        schedule = FitSchedule(gamma, self.max_iters, self.grad_tol)
        self.gamma_ = gamma
        self.pi_ = fit(data, pi0, schedule, reg)
        self.cost_ = cost_U(data, self.pi_, gamma, reg)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "pi_")
        X = check_array(X)
        return np.stack([self.regressor(x) @ self.pi_ for x in X])

    def jacobian(self, x):
        check_is_fitted(self, "pi_")
        return jacobian_from_parameters(self.regressor, x, self.pi_)

    def partial_fit(self, x, u, delta):
        # offline estimator: online observations are ignored
        return self

    @property
    def diagnostic(self):
        return getattr(self, "cost_", float("nan"))
