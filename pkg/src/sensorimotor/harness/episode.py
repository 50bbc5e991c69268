"""Closed-loop servo episodes and their CSV trajectory logs."""

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator

from ..core import cost_J, servo_command
from ..distributed import DistributedJacobianEstimator, allocate_units
from ..exceptions import ContractError, SensorimotorError, UnsupportedStructureError
from ..instant import BroydenJacobianEstimator, InstantGradientEstimator
from ..plants import finite_difference_jacobian, make_plant, regressor_for
from ..structured import StructuredJacobianEstimator
from .data import collect_dataset
from .scenarios import scenario_defaults

logger = logging.getLogger(__name__)

STALL_WINDOW = 50
STALL_DECREASE = 1e-12


class OracleJacobian(BaseEstimator):
    """Ground-truth Jacobian by central differences on the noise-free plant."""

    diagnostic_name = "fd_step"

    def __init__(self, plant=None, h=1e-6):
        self.plant = plant
        self.h = h

    def fit(self, *args):
        return self

    def jacobian(self, x):
        return finite_difference_jacobian(self.plant, x, self.h)

    def partial_fit(self, x, u, delta):
        return self

    @property
    def diagnostic(self):
        return float(self.h)


def bootstrap_jacobian(plant, x, probe, rng=None):
    """Forward-difference Jacobian from ``n`` axis-aligned probe commands at ``x``."""
    y0 = plant.features(plant.observe(x, rng))
    cols = []
    for i in range(plant.n):
        step = np.zeros(plant.n)
        # probe inward if the positive direction would leave the workspace
        step[i] = probe if x[i] + probe <= plant.high[i] else -probe
        y1 = plant.features(plant.observe(x + step, rng))
        cols.append((y1 - y0) / step[i])
    return np.column_stack(cols)


def _seeds(seed):
    episode, training = np.random.SeedSequence(int(seed)).spawn(2)
    return episode, training


def build_plant(config):
    params = dict(config.plant_params)
    if config.x0 is not None:
        params["x0"] = config.x0
    return make_plant(config.plant_id, **params)


def build_estimator(config, plant, training_seed=None):
    """Instantiate and (pre-)train the estimator named in ``config``."""
    if training_seed is None:
        training_seed = _seeds(config.seed)[1]
    rng = np.random.default_rng(training_seed)
    params = dict(config.estimator_params)
    kind = config.estimator_id
    data_seed = int(rng.integers(2**32))

    if kind == "oracle":
        return OracleJacobian(plant, params.get("h", 1e-6))

    if kind in ("broyden", "instant-gradient"):
        A0 = None
        if params.pop("bootstrap", True):
            probe = params.pop("probe", 1e-4 * plant.scale)
            A0 = bootstrap_jacobian(plant, plant.x0, probe, rng)
        else:
            params.pop("probe", None)
            A0 = np.zeros((plant.m, plant.n))
        cls = BroydenJacobianEstimator if kind == "broyden" else InstantGradientEstimator
        return cls(A0=A0, **params).reset()

    if kind == "structured":
        reg = regressor_for(plant)
        T = config.T or 30
        data = collect_dataset(plant, config.policy, T, config.amplitude, data_seed)
        return StructuredJacobianEstimator(reg, **params).fit(data.x, data.y)

    if kind == "distributed":
        defaults = scenario_defaults(config.plant_id).get("distributed", {})
        domain = params.pop("domain", None) or defaults.get("domain") or plant.workspace
        count = params.pop("count", defaults.get("count", 3))
        strategy = params.pop("strategy", "uniform-grid")
        sigma = params.pop("sigma", None)
        h_min = params.get("h_min")
        extra = {} if h_min is None else {"h_min": h_min}
        if strategy == "data-kmeans":
            T = config.T or 2 * plant.n * 64
            data = collect_dataset(plant, config.policy, T, config.amplitude, data_seed)
            est = DistributedJacobianEstimator(strategy, count=count, sigma=sigma, seed=data_seed, **params)
            return est.fit(data.x, data.u, data.delta)
        network = allocate_units(strategy, domain, count, plant.m, data_seed, sigma, **extra)
        anchors = network.anchors
        T = config.T or 2 * plant.n * len(anchors)
        lattice = anchors if config.policy == "grid-sweep" else None
        data = collect_dataset(plant, config.policy, T, config.amplitude, data_seed, lattice=lattice)
        est = DistributedJacobianEstimator(anchors=anchors, sigma=network.sigma, **params)
        return est.fit(data.x, data.u, data.delta)

    raise ContractError(f"unknown estimator {kind!r}")


class StepRecord(NamedTuple):
    step: int
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    err_norm: float
    cost_J: float
    jacobian: np.ndarray
    diag: float
    boundary: bool


@dataclass
class TrajectoryLog:
    n: int
    m: int
    diag_name: str = "diag"
    records: list = field(default_factory=list)
    status: str = "running"
    message: str = ""

    @property
    def steps(self):
        """Number of commands applied to the plant."""
        return max(len(self.records) - 1, 0)

    @property
    def final_error(self):
        return self.records[-1].err_norm if self.records else math.nan

    def columns(self):
        return (
            ["step"]
            + [f"x{i}" for i in range(self.n)]
            + [f"u{i}" for i in range(self.n)]
            + [f"y{i}" for i in range(self.m)]
            + ["err_norm", "cost_J"]
            + [f"A{i}_{j}" for i in range(self.m) for j in range(self.n)]
            + [f"diag_{self.diag_name}", "boundary_flag"]
        )

    def same_records(self, other):
        if len(self.records) != len(other.records):
            return False
        for a, b in zip(self.records, other.records):
            for va, vb in zip(a, b):
                if not np.array_equal(np.asarray(va), np.asarray(vb), equal_nan=True):
                    return False
        return True


def _fmt(value):
    return repr(float(value))


def export_csv(log, path):
    """Write ``log`` as CSV with round-trip float precision."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(log.columns())
            for r in log.records:
                row = [str(r.step)]
                row += [_fmt(v) for v in r.x] + [_fmt(v) for v in r.u] + [_fmt(v) for v in r.y]
                row += [_fmt(r.err_norm), _fmt(r.cost_J)]
                row += [_fmt(v) for v in np.ravel(r.jacobian)]
                row += [_fmt(r.diag), str(int(r.boundary))]
                writer.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write trajectory log to {path}: {exc}") from exc


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("y"))
    diag_name = header[-2][len("diag_") :]
    log = TrajectoryLog(n, m, diag_name, status="loaded")
    if header != log.columns():
        raise ContractError(f"{path} does not have the trajectory column layout")
    for row in body:
        vals = [float(v) for v in row[1:-1]]
        x, u, y = vals[:n], vals[n : 2 * n], vals[2 * n : 2 * n + m]
        rest = vals[2 * n + m :]
        log.records.append(
            StepRecord(
                int(row[0]),
                np.array(x),
                np.array(u),
                np.array(y),
                rest[0],
                rest[1],
                np.array(rest[2 : 2 + m * n]).reshape(m, n),
                rest[-1],
                row[-1] == "1",
            )
        )
    return log


def resolve_target(config, plant):
    if config.target is not None:
        return np.asarray(config.target, dtype=float)
    if config.target_configuration is not None:
        return plant.feature_map(config.target_configuration)
    raise ContractError("config gives neither a target nor a target configuration")


def run_servo_episode(config, estimator=None, plant=None):
    """Regulate the plant's features toward the configured target.

    Each step the estimator is first updated with the latest transition,
    then queried for a Jacobian at the current configuration; the servo
    command is applied and the step logged. Ends as ``converged``,
    ``max-steps`` or ``stalled`` (no progress over 50 steps, or an
    estimator/servo error).
    """
    episode_seed, training_seed = _seeds(config.seed)
    plant = build_plant(config) if plant is None else plant
    y_star = resolve_target(config, plant)
    if y_star.shape != (plant.m,):
        raise ContractError(f"target must have {plant.m} entries")
    if estimator is None:
        estimator = build_estimator(config, plant, training_seed)
    gains = config.gains
    rng = np.random.default_rng(episode_seed)

    log = TrajectoryLog(plant.n, plant.m, getattr(estimator, "diagnostic_name", "diag"))
    x = plant.x0.copy()
    y = plant.features(plant.observe(x, rng))
    errors = []
    boundary = False
    last_A = np.zeros((plant.m, plant.n))
    previous = None

    def terminal(status, message=""):
        nonlocal last_A
        try:
            last_A = estimator.jacobian(x)
        except SensorimotorError:
            pass
        u0 = np.zeros(plant.n)
        log.records.append(
            StepRecord(
                len(log.records), x, u0, y, errors[-1], cost_J(last_A, u0, y, y_star, gains),
                last_A, estimator.diagnostic, boundary,
            )
        )
        log.status = status
        log.message = message

    for t in range(config.max_steps + 1):
        if previous is not None:
            px, pu, py = previous
            try:
                estimator.partial_fit(px, pu, y - py)
            except SensorimotorError as exc:
                errors.append(float(np.linalg.norm(y - y_star)))
                terminal("stalled", f"estimator update failed: {exc}")
                break
        err = float(np.linalg.norm(y - y_star))
        errors.append(err)
        if err <= config.feature_tol:
            terminal("converged")
            break
        if t == config.max_steps:
            terminal("max-steps")
            break
        if t >= STALL_WINDOW and errors[t - STALL_WINDOW] - err < STALL_DECREASE:
            terminal("stalled", f"error decreased by less than {STALL_DECREASE:g} over {STALL_WINDOW} steps")
            break
        try:
            A = estimator.jacobian(x)
            u = servo_command(A, y, y_star, gains)
        except SensorimotorError as exc:
            terminal("stalled", str(exc))
            break
        last_A = A
        log.records.append(
            StepRecord(t, x, u, y, err, cost_J(A, u, y, y_star, gains), A, estimator.diagnostic, boundary)
        )
        result = plant.step(x, u, rng)
        previous = (x, result.x - x, y)
        x, y, boundary = result.x, result.y, result.clamped

    logger.info("episode %s after %d steps, err=%g", log.status, log.steps, log.final_error)
    return log


def compare(config, estimators=None):
    """Run each estimator on the same scenario and seed.

    Returns ``(estimator, log, note)`` rows; ``log`` is None when the
    estimator could not be built (``note`` says why).
    """
    from .config import ESTIMATORS

    rows = []
    for kind in estimators or ESTIMATORS:
        cell = config.with_estimator(kind)
        try:
            log = run_servo_episode(cell)
        except UnsupportedStructureError as exc:
            rows.append((kind, None, "unsupported"))
            continue
        except SensorimotorError as exc:
            logger.warning("%s failed: %s", kind, exc)
            rows.append((kind, None, "error"))
            continue
        rows.append((kind, log, log.message))
    return rows


def format_table(rows):
    lines = [f"{'estimator':<18}{'status':<12}{'steps':>6}  {'final_err':>12}"]
    for kind, log, note in rows:
        if log is None:
            lines.append(f"{kind:<18}{note:<12}{'-':>6}  {'-':>12}")
        else:
            lines.append(f"{kind:<18}{log.status:<12}{log.steps:>6}  {log.final_error:>12.4e}")
    return "\n".join(lines)
