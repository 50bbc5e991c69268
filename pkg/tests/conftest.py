import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def full_rank(rng, m, n, max_cond=1e3):
    """Gaussian matrix resampled until its condition number is moderate."""
    while True:
        A = rng.standard_normal((m, n))
        if np.linalg.cond(A) < max_cond:
            return A


def central_fd_gradient(f, x, h=1e-6):
    """Entrywise central-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        grad[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return grad
