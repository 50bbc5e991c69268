"""Exception types raised across the package."""

import numpy as np


class SensorimotorError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SensorimotorError, ValueError):
    """Non-finite values or out-of-range scalar arguments."""


class ContractError(SensorimotorError, ValueError):
    """Shapes or dimensions that do not agree with each other."""


class SingularityError(SensorimotorError, np.linalg.LinAlgError):
    """A matrix that must be inverted is singular (and no damping was given)."""

    def __init__(self, branch, message=None):
        self.branch = branch
        super().__init__(message or f"singular Gram matrix in the {branch} servo branch")


class StepSizeError(SensorimotorError, RuntimeError):
    """Gradient descent diverged; the learning gain is too large."""


class EmptyNeighborhoodError(SensorimotorError):
    """No observation falls inside a computing unit's neighbourhood ball."""


class UntrainedRegionError(SensorimotorError, LookupError):
    """The winning computing unit never received training data."""


class OutOfWorkspaceError(SensorimotorError, ValueError):
    """A configuration lies outside the plant workspace."""


class UnsupportedStructureError(SensorimotorError, TypeError):
    """The plant has no linear-in-parameters model."""
