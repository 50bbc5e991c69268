"""Excitation policies and observation datasets."""

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .._validation import as_vector, check_positive
from ..distributed import LocalizedObservation
from ..exceptions import ContractError, InvalidInputError
from ..structured import ObservationYX


@dataclass
class Dataset:
    """``T`` transitions: pre-motion ``x`` and ``y``, effective command ``u``, feature change ``delta``."""

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    delta: np.ndarray
    clamped: np.ndarray

    def __len__(self):
        return self.x.shape[0]

    def localized(self):
        return [LocalizedObservation(x, d, u) for x, u, d in zip(self.x, self.u, self.delta)]

    def yx(self):
        """``(y_k, x_k)`` pairs, including the final post-motion sample."""
        return [ObservationYX(y, x) for x, y in zip(self.x, self.y)]


def _ball_sample(rng, n, radius):
    direction = rng.standard_normal(n)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return np.zeros(n)
    return direction / norm * radius * rng.uniform() ** (1.0 / n)


def default_lattice(plant, T):
    """Uniform lattice over the workspace with about ``T / (2n)`` nodes."""
    nodes = max(1, T // (2 * plant.n))
    per_axis = max(2, int(np.floor(nodes ** (1.0 / plant.n))))
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(plant.low, plant.high)]
    return np.array(list(itertools.product(*axes)))


def collect_dataset(plant, policy, T, amplitude, seed=0, start=None, lattice=None):
    """Drive ``plant`` with ``T`` excitation commands and record the transitions.

    Policies
    --------
    ``random-walk``
        i.i.d. commands uniform in the ball of radius ``amplitude``.
    ``axis-probes``
        ``+a e1, -a e1, +a e2, -a e2, ...`` cycling from ``start``.
    ``grid-sweep``
        Visits each node of ``lattice`` (default: a uniform workspace
        lattice) and performs one axis-probe cycle there. Repositioning
        between nodes is not recorded.

    Commands that hit the workspace boundary are clamped; the recorded ``u``
    is the motion actually executed so that ``x_{k+1} = x_k + u_k`` holds.
    """
    T = int(T)
    if T < 1:
        raise InvalidInputError("T must be >= 1")
    amplitude = check_positive(amplitude, "amplitude")
    if amplitude > plant.scale:
        raise InvalidInputError(f"amplitude {amplitude} exceeds the workspace scale {plant.scale}")
    rng = np.random.default_rng(seed)
    x = plant.x0.copy() if start is None else as_vector(start, "start", size=plant.n)
    n = plant.n

    if policy == "grid-sweep":
        nodes = default_lattice(plant, T) if lattice is None else np.asarray(lattice, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != n:
            raise ContractError(f"lattice must have shape (N, {n})")
        # stay inside the box so every probe is executable
        nodes = np.clip(nodes, plant.low, plant.high - amplitude)
    elif policy not in ("random-walk", "axis-probes"):
        raise InvalidInputError(f"unknown excitation policy {policy!r}")

    xs, us, ys, ds, flags = [], [], [], [], []
    y = plant.features(plant.observe(x, rng))
    for k in range(T):
        if policy == "random-walk":
            command = _ball_sample(rng, n, amplitude)
        else:
            cycle = k % (2 * n)
            if policy == "grid-sweep" and cycle == 0:
                x = nodes[(k // (2 * n)) % len(nodes)].copy()
                y = plant.features(plant.observe(x, rng))
            command = np.zeros(n)
            command[cycle // 2] = amplitude if cycle % 2 == 0 else -amplitude
        result = plant.step(x, command, rng)
        xs.append(x)
        us.append(result.x - x)
        ys.append(y)
        ds.append(result.y - y)
        flags.append(result.clamped)
        x, y = result.x, result.y

    return Dataset(np.array(xs), np.array(us), np.array(ys), np.array(ds), np.array(flags, dtype=bool))


def _header(n, m):
    return (
        [f"x{i}" for i in range(n)]
        + [f"u{i}" for i in range(n)]
        + [f"y{i}" for i in range(m)]
        + [f"delta{i}" for i in range(m)]
        + ["boundary_flag"]
    )


def save_dataset(dataset, path):
    n, m = dataset.x.shape[1], dataset.y.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header(n, m))
        for x, u, y, d, f in zip(dataset.x, dataset.u, dataset.y, dataset.delta, dataset.clamped):
            values = [repr(float(v)) for v in itertools.chain(x, u, y, d)]
            writer.writerow(values + [str(int(f))])


def load_dataset(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("y"))
    if header != _header(n, m):
        raise ContractError(f"{path} does not have the dataset column layout")
    arr = np.array([[float(v) for v in row[:-1]] for row in body]).reshape(len(body), 2 * n + 2 * m)
    flags = np.array([row[-1] == "1" for row in body], dtype=bool)
    return Dataset(
        arr[:, :n], arr[:, n : 2 * n], arr[:, 2 * n : 2 * n + m], arr[:, 2 * n + m :], flags
    )
