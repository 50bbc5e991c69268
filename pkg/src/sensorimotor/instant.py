"""Structure-free instantaneous Jacobian estimation.

Both rules here correct the current estimate along the direction of the last
command only: the Broyden secant update and plain gradient descent on the
one-sample prediction cost.
"""

from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import as_matrix, as_vector, check_positive
from .exceptions import ContractError, InvalidInputError

MIN_COMMAND_SQNORM = 1e-18


class ObservationDU(NamedTuple):
    """Feature change ``delta`` produced by command ``u``."""

    delta: np.ndarray
    u: np.ndarray


class BroydenResult(NamedTuple):
    jacobian: np.ndarray
    skipped: bool


def _unpack(A, obs):
    A = as_matrix(A, "A")
    m, n = A.shape
    delta = as_vector(obs.delta, "delta", size=m)
    u = as_vector(obs.u, "u", size=n)
    return A, delta, u


def is_degenerate_command(u):
    u = np.asarray(u, dtype=float)
    return float(u @ u) < MIN_COMMAND_SQNORM


def broyden_update(A_prev, obs, gain=1.0):
    """Rank-one secant correction of ``A_prev`` from ``obs``.

    Returns ``BroydenResult(jacobian, skipped)``. Commands with
    ``||u||^2 < 1e-18`` leave the estimate unchanged and set ``skipped``.
    """
    gain = float(gain)
    if not (0.0 < gain <= 1.0):
        raise InvalidInputError(f"Broyden gain must lie in (0, 1], got {gain}")
    A_prev, delta, u = _unpack(A_prev, obs)
    uu = float(u @ u)
    if uu < MIN_COMMAND_SQNORM:
        return BroydenResult(A_prev.copy(), True)
    residual = delta - A_prev @ u
    return BroydenResult(A_prev + gain * np.outer(residual, u) / uu, False)


def cost_V(A_hat, obs, gamma):
    """Prediction cost ``(gamma/2) ||A u - delta||^2`` of a single sample."""
    gamma = check_positive(gamma, "gamma")
    A_hat, delta, u = _unpack(A_hat, obs)
    r = A_hat @ u - delta
    return 0.5 * gamma * float(r @ r)


def grad_V(A_hat, obs, gamma):
    gamma = check_positive(gamma, "gamma")
    A_hat, delta, u = _unpack(A_hat, obs)
    return gamma * np.outer(A_hat @ u - delta, u)


def gradient_update_V(A_hat, obs, gamma):
    """Entrywise descent step ``a_ij <- a_ij - gamma (A u - delta)_i u_j``."""
    return as_matrix(A_hat, "A_hat") - grad_V(A_hat, obs, gamma)


class _InstantBase(BaseEstimator):
    def _start(self, shape):
        if self.A0 is None:
            if shape is None:
                raise ContractError("shape is unknown; pass A0 or call fit first")
            return np.zeros(shape)
        return as_matrix(self.A0, "A0").copy()

    def reset(self, shape=None):
        self.jacobian_ = self._start(shape)
        self.n_updates_ = 0
        self.n_skipped_ = 0
        self.diagnostic_ = float("nan")
        return self

    def fit(self, U, D):
        """Run the update sequentially over commands ``U`` and feature changes ``D``."""
        U = check_array(U)
        D = check_array(D)
        if U.shape[0] != D.shape[0]:
            raise ContractError("U and D must have the same number of rows")
        self.reset((D.shape[1], U.shape[1]))
        for u, d in zip(U, D):
            self.partial_fit(None, u, d)
        return self

    def jacobian(self, x=None):
        check_is_fitted(self, "jacobian_")
        return self.jacobian_.copy()

    def predict(self, U):
        """Predicted feature changes ``A u`` for each row of ``U``."""
        check_is_fitted(self, "jacobian_")
        return check_array(U) @ self.jacobian_.T

    @property
    def diagnostic(self):
        return getattr(self, "diagnostic_", float("nan"))


class BroydenJacobianEstimator(_InstantBase):
    """Online Broyden estimator; ``diagnostic`` is the post-update secant residual."""

    diagnostic_name = "secant_residual"

    def __init__(self, gain=1.0, A0=None):
        self.gain = gain
        self.A0 = A0

    def partial_fit(self, x, u, delta):
        if not hasattr(self, "jacobian_"):
            self.reset((len(delta), len(u)))
        obs = ObservationDU(delta, u)
        self.jacobian_, skipped = broyden_update(self.jacobian_, obs, self.gain)
        if skipped:
            self.n_skipped_ += 1
        else:
            self.n_updates_ += 1
            self.diagnostic_ = float(np.linalg.norm(self.jacobian_ @ obs.u - obs.delta))
        return self


class InstantGradientEstimator(_InstantBase):
    """Online gradient descent on the one-sample prediction cost.

    A fixed ``gamma`` must satisfy ``gamma <= 1 / ||u||^2`` to avoid
    overshooting. With ``gamma=None`` each step uses ``step / ||u||^2``, which
    at ``step=1`` coincides with the unit-gain Broyden update. ``diagnostic``
    is the cost before the update.
    """

    diagnostic_name = "cost_V"

    def __init__(self, gamma=None, step=0.5, A0=None):
        self.gamma = gamma
        self.step = step
        self.A0 = A0

    def partial_fit(self, x, u, delta):
        if not hasattr(self, "jacobian_"):
            self.reset((len(delta), len(u)))
        u = as_vector(u, "u")
        if is_degenerate_command(u):
            self.n_skipped_ += 1
            return self
        gamma = self.gamma if self.gamma is not None else self.step / float(u @ u)
        obs = ObservationDU(delta, u)
        self.diagnostic_ = cost_V(self.jacobian_, obs, gamma)
        self.jacobian_ = gradient_update_V(self.jacobian_, obs, gamma)
        self.n_updates_ += 1
        return self
