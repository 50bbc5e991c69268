"""Synthetic plants with known sensor models and ground-truth Jacobians.

Every plant maps a configuration ``x`` to a raw sensor reading ``s = g(x)``
and a feature vector ``y = f(s)``. Plants are immutable; measurement noise is
drawn from a caller-supplied ``numpy.random.Generator`` so that episodes stay
reproducible.
"""

from typing import NamedTuple

import numpy as np

from ._validation import as_matrix, as_vector, check_non_negative, check_positive
from .exceptions import InvalidInputError, OutOfWorkspaceError, UnsupportedStructureError
from .structured import RegressorModel, central_difference

WORKSPACE_SLACK = 1e-12


class StepResult(NamedTuple):
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    clamped: bool


class Plant:
    """Base class; subclasses implement ``_sense`` and ``features``."""

    name = "plant"

    def __init__(self, n, m, workspace, x0, noise_std=0.0):
        self.n = int(n)
        self.m = int(m)
        low, high = workspace
        self.low = as_vector(low, "workspace low", size=self.n)
        self.high = as_vector(high, "workspace high", size=self.n)
        if np.any(self.high <= self.low):
            raise InvalidInputError("workspace must be a non-degenerate box")
        self.x0 = as_vector(x0, "x0", size=self.n)
        if not self.contains(self.x0):
            raise InvalidInputError(f"x0 {self.x0} lies outside the workspace")
        self.noise_std = check_non_negative(noise_std, "noise_std")

    @property
    def workspace(self):
        return self.low.copy(), self.high.copy()

    @property
    def scale(self):
        """Largest workspace extent, used to size default gains."""
        return float(np.max(self.high - self.low))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.low - WORKSPACE_SLACK) and np.all(x <= self.high + WORKSPACE_SLACK))

    def _check(self, x):
        x = as_vector(x, "x", size=self.n)
        if not self.contains(x):
            raise OutOfWorkspaceError(f"configuration {x} lies outside the {self.name} workspace")
        return x

    def _sense(self, x):
        raise NotImplementedError

    def features(self, s):
        raise NotImplementedError

    def observe(self, x, rng=None):
        """Raw sensor reading at ``x``; noisy only if ``noise_std > 0`` and ``rng`` is given."""
        s = np.asarray(self._sense(self._check(x)), dtype=float)
        if self.noise_std > 0 and rng is not None:
            s = s + rng.normal(0.0, self.noise_std, size=s.shape)
        return s

    def feature_map(self, x):
        """Noise-free ``f(g(x))``."""
        return self.features(self.observe(x))

    def step(self, x, u, rng=None):
        """Apply command ``u``; the result is clamped to the workspace and flagged."""
        x = as_vector(x, "x", size=self.n)
        u = as_vector(u, "u", size=self.n)
        target = x + u
        clamped_x = np.clip(target, self.low, self.high)
        clamped = bool(np.any(clamped_x != target))
        s = self.observe(clamped_x, rng)
        return StepResult(clamped_x, s, self.features(s), clamped)

    def jacobian(self, x):
        """Analytic Jacobian; only some plants provide it."""
        raise NotImplementedError(f"{self.name} has no analytic Jacobian")

    def regressor(self):
        raise UnsupportedStructureError(f"{self.name} has no linear-in-parameters model")


class FunctionPlant(Plant):
    """Plant whose features are an arbitrary smooth function of the configuration."""

    name = "function"

    def __init__(self, func, n, m, workspace, x0, noise_std=0.0, jac=None):
        self.func = func
        self.jac = jac
        super().__init__(n, m, workspace, x0, noise_std)

    def _sense(self, x):
        return as_vector(self.func(x), "f(x)", size=self.m)

    def features(self, s):
        return as_vector(s, "s", size=self.m)

    def jacobian(self, x):
        if self.jac is None:
            return super().jacobian(x)
        return as_matrix(self.jac(as_vector(x, "x", size=self.n)), "jacobian", shape=(self.m, self.n))


class LinearPlant(FunctionPlant):
    """``y = A x + b``; the Jacobian is ``A`` everywhere."""

    name = "linear"

    def __init__(self, A, workspace, x0, b=None, noise_std=0.0):
        A = as_matrix(A, "A")
        self.A = A
        self.b = np.zeros(A.shape[0]) if b is None else as_vector(b, "b", size=A.shape[0])
        super().__init__(
            lambda x: self.A @ x + self.b,
            A.shape[1],
            A.shape[0],
            workspace,
            x0,
            noise_std,
            jac=lambda x: self.A.copy(),
        )


def planar_forward_kinematics(q, links):
    phi = np.cumsum(q)
    return np.array([np.sum(links * np.cos(phi)), np.sum(links * np.sin(phi))])


def planar_arm_jacobian(q, links):
    phi = np.cumsum(q)
    # column j sums the contributions of links j..end
    dx = -np.cumsum((links * np.sin(phi))[::-1])[::-1]
    dy = np.cumsum((links * np.cos(phi))[::-1])[::-1]
    return np.vstack([dx, dy])


class CameraArmPlant(Plant):
    """Planar serial arm watched by an uncalibrated affine camera.

    The end-effector position ``c(q)`` is projected to pixels as
    ``y = P c(q) + b``. Kinematics are known, ``P`` and ``b`` are not.
    """

    name = "camera-arm"

    def __init__(
        self,
        P=((120.0, 15.0), (-10.0, 105.0)),
        b=(320.0, 240.0),
        links=(1.0, 1.0, 1.0),
        workspace=None,
        x0=(0.2, 0.8, -0.6),
        noise_std=0.0,
    ):
        self.P = as_matrix(P, "P", shape=(2, 2))
        self.b = as_vector(b, "b", size=2)
        self.links = as_vector(links, "links")
        n = self.links.shape[0]
        if workspace is None:
            workspace = (np.full(n, -2.5), np.full(n, 2.5))
        super().__init__(n, 2, workspace, x0, noise_std)

    def _sense(self, x):
        return self.P @ planar_forward_kinematics(x, self.links) + self.b

    def features(self, s):
        return as_vector(s, "s", size=2).copy()

    def jacobian(self, x):
        return self.P @ planar_arm_jacobian(as_vector(x, "x", size=self.n), self.links)

    @property
    def true_parameters(self):
        return np.concatenate([self.P.ravel(), self.b])

    def regressor(self):
        links = self.links

        def evaluate(x):
            c1, c2 = planar_forward_kinematics(x, links)
            return np.array([[c1, c2, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0, c1, c2, 0.0, 1.0]])

        def evaluate_dx(x, pi):
            return pi[:4].reshape(2, 2) @ planar_arm_jacobian(x, links)

        return RegressorModel(6, 2, self.n, evaluate, evaluate_dx)


class BeamPlant(Plant):
    """Elastic beam bent by a grasp pose ``(px, py, pz, psi)``.

    Closed-form deformation: curvature
    ``kappa = c1 r (1 + c2 sin^2 psi)`` with ``r`` the planar distance of the
    grasp point from its rest position, and bend angle
    ``theta = atan2(dy, dx) + c3 psi``. The raw reading is a sampled
    backbone (a circular arc of that curvature and initial tangent angle);
    features are recovered from three backbone samples.
    """

    name = "beam"

    def __init__(
        self,
        c1=2.0,
        c2=0.3,
        c3=0.5,
        rest=(0.0, 0.0, 0.0, 0.0),
        length=0.5,
        samples=11,
        workspace=((0.0, 0.0, -0.1, -0.6), (0.4, 0.4, 0.1, 0.6)),
        x0=(0.15, 0.12, 0.0, 0.1),
        noise_std=0.0,
    ):
        self.c1, self.c2, self.c3 = float(c1), float(c2), float(c3)
        self.rest = as_vector(rest, "rest", size=4)
        self.length = check_positive(length, "length")
        if int(samples) < 3 or int(samples) % 2 == 0:
            raise InvalidInputError("backbone needs an odd number (>= 3) of samples")
        self.arclength = np.linspace(0.0, self.length, int(samples))
        super().__init__(4, 2, workspace, x0, noise_std)

    def closed_form(self, x):
        x = as_vector(x, "x", size=4)
        dx, dy = x[0] - self.rest[0], x[1] - self.rest[1]
        psi = x[3] - self.rest[3]
        kappa = self.c1 * np.hypot(dx, dy) * (1.0 + self.c2 * np.sin(psi) ** 2)
        theta = np.arctan2(dy, dx) + self.c3 * psi
        return np.array([kappa, theta])

    def _sense(self, x):
        kappa, theta = self.closed_form(x)
        s = self.arclength
        half = 0.5 * kappa * s
        # chord of an arc: length s * sinc(kappa s / 2), direction theta + kappa s / 2
        chord = s * np.sinc(half / np.pi)
        points = np.column_stack([chord * np.cos(theta + half), chord * np.sin(theta + half)])
        return points.ravel()

    def features(self, s):
        pts = as_vector(s, "s", size=2 * len(self.arclength)).reshape(-1, 2)
        a, b, c = pts[0], pts[len(pts) // 2], pts[-1]
        ab, bc, ca = b - a, c - b, a - c
        cross = ab[0] * (c - a)[1] - ab[1] * (c - a)[0]
        denom = np.linalg.norm(ab) * np.linalg.norm(bc) * np.linalg.norm(ca)
        kappa = 2.0 * abs(cross) / denom
        s_mid = self.arclength[len(pts) // 2]
        theta = np.arctan2(ab[1], ab[0]) - 0.5 * kappa * s_mid
        return np.array([kappa, theta])

    def jacobian(self, x):
        x = as_vector(x, "x", size=4)
        dx, dy = x[0] - self.rest[0], x[1] - self.rest[1]
        psi = x[3] - self.rest[3]
        r2 = dx * dx + dy * dy
        r = np.sqrt(r2)
        stretch = 1.0 + self.c2 * np.sin(psi) ** 2
        return np.array(
            [
                [self.c1 * stretch * dx / r, self.c1 * stretch * dy / r, 0.0, self.c1 * r * self.c2 * np.sin(2 * psi)],
                [-dy / r2, dx / r2, 0.0, self.c3],
            ]
        )


class ProbePlant(Plant):
    """Ultrasound probe pressed on soft tissue, configuration ``(px, py, pz, rx, ry, rz)``.

    Features: image location ``mu = M (px, py) + c`` of the tracked target,
    normal force ``phi = k max(0, z0 - pz)`` (Hooke's law), and probe tilt
    ``omega = g * (rx, ry) + o`` relative to the body. The yaw ``rz`` is not
    observed. The raw reading is ``[mu, wrench(6), omega]``.
    """

    name = "probe"

    def __init__(
        self,
        M=((900.0, 40.0), (-25.0, 850.0)),
        c=(10.0, -5.0),
        k=400.0,
        z0=0.02,
        tilt_gain=(0.9, 1.1),
        tilt_offset=(0.05, -0.03),
        workspace=((-0.05, -0.05, -0.02, -0.3, -0.3, -0.3), (0.05, 0.05, 0.04, 0.3, 0.3, 0.3)),
        x0=(0.02, -0.015, 0.008, 0.1, -0.1, 0.0),
        noise_std=0.0,
    ):
        self.M = as_matrix(M, "M", shape=(2, 2))
        self.c = as_vector(c, "c", size=2)
        self.k = check_positive(k, "k")
        self.z0 = float(z0)
        self.tilt_gain = as_vector(tilt_gain, "tilt_gain", size=2)
        self.tilt_offset = as_vector(tilt_offset, "tilt_offset", size=2)
        super().__init__(6, 5, workspace, x0, noise_std)

    def _sense(self, x):
        mu = self.M @ x[:2] + self.c
        force = self.k * max(0.0, self.z0 - x[2])
        omega = self.tilt_gain * x[3:5] + self.tilt_offset
        return np.concatenate([mu, [0.0, 0.0, force, 0.0, 0.0, 0.0], omega])

    def features(self, s):
        s = as_vector(s, "s", size=10)
        return np.array([s[0], s[1], s[4], s[8], s[9]])

    def jacobian(self, x):
        x = as_vector(x, "x", size=6)
        J = np.zeros((5, 6))
        J[:2, :2] = self.M
        J[2, 2] = -self.k if x[2] < self.z0 else 0.0
        J[3, 3], J[4, 4] = self.tilt_gain
        return J

    def target_configuration(self, force):
        """Configuration where ``mu = 0``, ``phi = force`` and ``omega = 0``."""
        p = np.linalg.solve(self.M, -self.c)
        pz = self.z0 - force / self.k
        tilt = -self.tilt_offset / self.tilt_gain
        return np.array([p[0], p[1], pz, tilt[0], tilt[1], 0.0])

    @property
    def true_parameters(self):
        g, o = self.tilt_gain, self.tilt_offset
        return np.concatenate([[self.k, self.k * self.z0], self.M.ravel(), self.c, [g[0], o[0], g[1], o[1]]])

    def regressor(self):
        """Linear model valid while the probe is in contact (``pz <= z0``)."""

        def evaluate(x):
            L = np.zeros((5, 12))
            L[0, 2:4] = x[:2]
            L[0, 6] = 1.0
            L[1, 4:6] = x[:2]
            L[1, 7] = 1.0
            L[2, 0] = -x[2]
            L[2, 1] = 1.0
            L[3, 8:10] = (x[3], 1.0)
            L[4, 10:12] = (x[4], 1.0)
            return L

        def evaluate_dx(x, pi):
            J = np.zeros((5, 6))
            J[:2, :2] = pi[2:6].reshape(2, 2)
            J[2, 2] = -pi[0]
            J[3, 3] = pi[8]
            J[4, 4] = pi[10]
            return J

        return RegressorModel(12, 5, 6, evaluate, evaluate_dx)


def regressor_for(plant):
    """Linear-in-parameters regressor of ``plant``.

    Raises
    ------
    UnsupportedStructureError
        For plants without such a model (the beam).
    """
    return plant.regressor()


def finite_difference_jacobian(plant, x, h=1e-6):
    """Central-difference Jacobian of the noise-free feature map.

    If a probe leaves the workspace the step is shrunk once by 10x before
    giving up with :class:`OutOfWorkspaceError`.
    """
    x = as_vector(x, "x", size=plant.n)
    h = check_positive(h, "h")
    for attempt in range(2):
        if plant.contains(x + h) and plant.contains(x - h):
            return central_difference(plant.feature_map, x, np.full(plant.n, h))
        if attempt == 0:
            h /= 10.0
    raise OutOfWorkspaceError(f"finite-difference probes around {x} leave the workspace")


PLANTS = {
    "camera-arm": CameraArmPlant,
    "beam": BeamPlant,
    "probe": ProbePlant,
    "linear": LinearPlant,
}


def make_plant(plant_id, **params):
    try:
        cls = PLANTS[plant_id]
    except KeyError:
        raise InvalidInputError(f"unknown plant {plant_id!r}; choose from {sorted(PLANTS)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for plant {plant_id!r}: {exc}") from None
