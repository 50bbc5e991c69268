"""Kinematic bookkeeping and saturated set-point servo laws.

Configurations, commands and features are plain 1-D float arrays; Jacobian
estimates are 2-D arrays of shape ``(m, n)`` with ``m`` features and ``n``
configuration coordinates. All functions here are pure.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, as_vector, check_non_negative, check_positive
from .exceptions import ContractError, InvalidInputError, SingularityError

BRANCHES = ("right", "left", "inverse")


@dataclass(frozen=True)
class GainSettings:
    """Servo-loop gains.

    Parameters
    ----------
    lam : float
        Feedback gain applied to the (saturated) feature error.
    u_max : float
        Norm bound on the motor command, in configuration units per step.
    damping : float
        Tikhonov term added to the inverted Gram matrix. Zero gives the
        exact pseudo-inverse formulas and turns rank deficiency into an error.
    dt : float
        Servo period in seconds; only used for velocity conversion.
    error_bound : float or None
        Norm bound for the feature-error saturation. ``None`` reuses ``u_max``.
        Feature and configuration units usually differ, so plants with pixel
        or newton features should set this explicitly.
    """

    lam: float = 0.5
    u_max: float = 0.05
    damping: float = 1e-8
    dt: float = 1.0
    error_bound: float | None = None

    def __post_init__(self):
        check_positive(self.lam, "lam")
        check_positive(self.u_max, "u_max")
        check_non_negative(self.damping, "damping")
        check_positive(self.dt, "dt")
        if self.error_bound is not None:
            check_positive(self.error_bound, "error_bound")

    @property
    def sat_bound(self):
        return self.u_max if self.error_bound is None else self.error_bound


def saturate(e, bound):
    """Rescale ``e`` onto the ball of radius ``bound`` if it lies outside it.

    The direction of ``e`` is preserved, unlike per-component clipping.
    """
    bound = check_positive(bound, "bound")
    e = as_vector(e, "e")
    norm = np.linalg.norm(e)
    if norm <= bound:
        return e.copy()
    return e * (bound / norm)


def apply_command(x, u):
    x = as_vector(x, "x")
    u = as_vector(u, "u", size=x.shape[0])
    return x + u


def to_velocity(u, dt):
    dt = check_positive(dt, "dt")
    return as_vector(u, "u") / dt


def predict_feature(y, A, u):
    """First-order prediction ``y + A u`` of the next feature vector."""
    y = as_vector(y, "y")
    u = as_vector(u, "u")
    A = as_matrix(A, "A", shape=(y.shape[0], u.shape[0]))
    return y + A @ u


def _error(y, y_star, m=None):
    y = as_vector(y, "y", size=m)
    y_star = as_vector(y_star, "y_star", size=y.shape[0])
    return y - y_star


def cost_J(A, u, y, y_star, gains):
    """Quadratic servo cost ``||A u + lam sat(y - y*)||^2``."""
    e = _error(y, y_star)
    u = as_vector(u, "u")
    A = as_matrix(A, "A", shape=(e.shape[0], u.shape[0]))
    r = A @ u + gains.lam * saturate(e, gains.sat_bound)
    return float(r @ r)


def select_branch(m, n):
    if n > m:
        return "right"
    if m > n:
        return "left"
    return "inverse"


def pseudo_inverse_solve(A, rhs, damping=0.0, branch=None):
    """Solve ``A u = rhs`` in the minimum-norm or least-squares sense.

    ``branch`` picks the formula: ``"right"`` uses ``A^T (A A^T + eps I)^-1``,
    ``"left"`` uses ``(A^T A + eps I)^-1 A^T`` and ``"inverse"`` (square A
    only) uses plain inversion at zero damping and the damped right form
    otherwise. ``None`` chooses from the shape of ``A``.

    Raises
    ------
    SingularityError
        If ``damping`` is zero and ``A`` lacks the rank the branch needs.
    """
    A = as_matrix(A, "A")
    m, n = A.shape
    rhs = as_vector(rhs, "rhs", size=m)
    damping = check_non_negative(damping, "damping")
    if branch is None:
        branch = select_branch(m, n)
    if branch not in BRANCHES:
        raise InvalidInputError(f"unknown branch {branch!r}")
    if branch == "inverse" and m != n:
        raise ContractError(f"inverse branch needs a square matrix, got {A.shape}")

    if damping == 0.0:
        needed = m if branch == "right" else n
        if np.linalg.matrix_rank(A) < needed:
            raise SingularityError(branch)

    try:
        if branch == "left":
            gram = A.T @ A + damping * np.eye(n)
            return np.linalg.solve(gram, A.T @ rhs)
        if branch == "inverse" and damping == 0.0:
            return np.linalg.solve(A, rhs)
        gram = A @ A.T + damping * np.eye(m)
        return A.T @ np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(branch) from exc


def servo_command(A, y, y_star, gains, branch=None, final_saturation=True):
    """Motor command driving ``y`` toward ``y_star`` under Jacobian ``A``.

    Minimises the servo cost via the pseudo-inverse matching the shape of
    ``A``; the result is saturated to ``gains.u_max`` unless
    ``final_saturation`` is False.
    """
    A = as_matrix(A, "A")
    e = _error(y, y_star, m=A.shape[0])
    target = -gains.lam * saturate(e, gains.sat_bound)
    u = pseudo_inverse_solve(A, target, damping=gains.damping, branch=branch)
    if final_saturation:
        u = saturate(u, gains.u_max)
    return u
