"""JSON experiment configuration with strict key checking.

Example::

    {
      "plant": {"id": "beam", "params": {"noise_std": 0.0}},
      "estimator": {"id": "distributed", "params": {"count": 3, "online": false}},
      "gains": {"lambda": 0.5, "u_max": 0.06, "damping": 1e-8, "dt": 0.01, "error_bound": 0.5},
      "target": null,
      "target_configuration": [0.25, 0.2, 0.0, -0.2],
      "x0": null,
      "stop": {"feature_tol": 1e-3, "max_steps": 400},
      "training": {"policy": "grid-sweep", "T": null, "amplitude": 1e-4},
      "seed": 0,
      "output": "beam.csv"
    }

Missing sections fall back to the plant's scenario defaults; unknown keys
anywhere are rejected.
"""

import copy
import json
from dataclasses import dataclass, field

from ..core import GainSettings
from ..exceptions import InvalidInputError
from .scenarios import scenario_defaults

ESTIMATORS = ("oracle", "structured", "broyden", "instant-gradient", "distributed")
POLICIES = ("random-walk", "axis-probes", "grid-sweep")

TOP_KEYS = {
    "plant",
    "estimator",
    "gains",
    "target",
    "target_configuration",
    "x0",
    "stop",
    "training",
    "seed",
    "output",
}
GAIN_KEYS = {"lambda", "u_max", "damping", "dt", "error_bound"}
STOP_KEYS = {"feature_tol", "max_steps"}
TRAINING_KEYS = {"policy", "T", "amplitude"}
ESTIMATOR_KEYS = {
    "oracle": {"h"},
    "structured": {"gamma", "max_iters", "grad_tol"},
    "broyden": {"gain", "bootstrap", "probe"},
    "instant-gradient": {"gamma", "step", "bootstrap", "probe"},
    "distributed": {"strategy", "count", "domain", "sigma", "h_min", "gamma", "max_iters", "grad_tol", "online"},
}


def _reject_unknown(section, allowed, where):
    if not isinstance(section, dict):
        raise InvalidInputError(f"{where} must be a JSON object")
    unknown = set(section) - set(allowed)
    if unknown:
        raise InvalidInputError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


@dataclass
class ExperimentConfig:
    plant_id: str
    plant_params: dict = field(default_factory=dict)
    estimator_id: str = "oracle"
    estimator_params: dict = field(default_factory=dict)
    gains: GainSettings = field(default_factory=GainSettings)
    target: list | None = None
    target_configuration: list | None = None
    x0: list | None = None
    feature_tol: float = 1e-3
    max_steps: int = 400
    policy: str = "random-walk"
    T: int | None = None
    amplitude: float = 1e-3
    seed: int = 0
    output: str | None = None

    def with_estimator(self, estimator_id, params=None):
        other = copy.deepcopy(self)
        other.estimator_id = estimator_id
        other.estimator_params = dict(params or {})
        defaults = scenario_defaults(self.plant_id)
        other.policy, other.T, other.amplitude = _training_defaults(defaults, estimator_id)
        return other


def _training_defaults(defaults, estimator_id):
    training = defaults["training"].get(estimator_id, defaults["training"]["default"])
    return training["policy"], training.get("T"), training["amplitude"]


def config_from_dict(raw):
    """Validate a decoded JSON document and merge it with scenario defaults."""
    _reject_unknown(raw, TOP_KEYS, "config")
    plant = raw.get("plant")
    if not isinstance(plant, dict) or "id" not in plant:
        raise InvalidInputError("config.plant.id is required")
    _reject_unknown(plant, {"id", "params"}, "plant")
    plant_id = plant["id"]
    defaults = scenario_defaults(plant_id)

    estimator = raw.get("estimator", {"id": "oracle"})
    _reject_unknown(estimator, {"id", "params"}, "estimator")
    estimator_id = estimator.get("id", "oracle")
    if estimator_id not in ESTIMATORS:
        raise InvalidInputError(f"unknown estimator {estimator_id!r}; choose from {', '.join(ESTIMATORS)}")
    estimator_params = estimator.get("params", {}) or {}
    _reject_unknown(estimator_params, ESTIMATOR_KEYS[estimator_id], f"estimator.params ({estimator_id})")

    gains_raw = dict(defaults["gains"])
    user_gains = raw.get("gains", {}) or {}
    _reject_unknown(user_gains, GAIN_KEYS, "gains")
    gains_raw.update(user_gains)
    gains = GainSettings(
        lam=gains_raw["lambda"],
        u_max=gains_raw["u_max"],
        damping=gains_raw.get("damping", 1e-8),
        dt=gains_raw.get("dt", 1.0),
        error_bound=gains_raw.get("error_bound"),
    )

    stop = raw.get("stop", {}) or {}
    _reject_unknown(stop, STOP_KEYS, "stop")
    feature_tol = float(stop.get("feature_tol", 1e-3))
    max_steps = int(stop.get("max_steps", defaults["max_steps"]))
    if feature_tol <= 0:
        raise InvalidInputError("stop.feature_tol must be positive")
    if max_steps < 1:
        raise InvalidInputError("stop.max_steps must be >= 1")

    policy, T, amplitude = _training_defaults(defaults, estimator_id)
    training = raw.get("training", {}) or {}
    _reject_unknown(training, TRAINING_KEYS, "training")
    policy = training.get("policy", policy)
    T = training.get("T", T)
    amplitude = float(training.get("amplitude", amplitude))
    if policy not in POLICIES:
        raise InvalidInputError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")
    if T is not None and int(T) < 1:
        raise InvalidInputError("training.T must be >= 1")
    if amplitude <= 0:
        raise InvalidInputError("training.amplitude must be positive")

    target = raw.get("target")
    target_configuration = raw.get("target_configuration")
    if target is None and target_configuration is None:
        target = defaults.get("target")
        target_configuration = defaults.get("target_configuration")

    return ExperimentConfig(
        plant_id=plant_id,
        plant_params=dict(plant.get("params", {}) or {}),
        estimator_id=estimator_id,
        estimator_params=dict(estimator_params),
        gains=gains,
        target=target,
        target_configuration=target_configuration,
        x0=raw.get("x0"),
        feature_tol=feature_tol,
        max_steps=max_steps,
        policy=policy,
        T=None if T is None else int(T),
        amplitude=amplitude,
        seed=int(raw.get("seed", 0)),
        output=raw.get("output"),
    )


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(raw)
