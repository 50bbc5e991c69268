# Built-in scenario defaults per plant. Gains are tuning starting points.

import copy

from ..exceptions import InvalidInputError

_SCENARIOS = {
    "camera-arm": {
        "gains": {"lambda": 0.5, "u_max": 0.25, "damping": 1e-8, "dt": 0.01, "error_bound": 50.0},
        "target_configuration": [0.6, 0.3, 0.4],
        "max_steps": 400,
        "distributed": {"domain": [[0.1, 0.2, -0.7], [0.7, 0.9, 0.5]], "count": 5},
        "training": {
            "default": {"policy": "axis-probes", "amplitude": 1e-4},
            "structured": {"policy": "random-walk", "T": 30, "amplitude": 0.2},
            "distributed": {"policy": "grid-sweep", "amplitude": 1e-4},
        },
    },
    "beam": {
        "gains": {"lambda": 0.5, "u_max": 0.06, "damping": 1e-8, "dt": 0.01, "error_bound": 0.5},
        "target_configuration": [0.25, 0.2, 0.0, -0.2],
        "max_steps": 400,
        "distributed": {"domain": [[0.1, 0.08, -0.05, -0.3], [0.3, 0.24, 0.05, 0.2]], "count": [5, 5, 1, 5]},
        "training": {
            "default": {"policy": "axis-probes", "amplitude": 1e-4},
            "structured": {"policy": "random-walk", "T": 30, "amplitude": 0.02},
            "distributed": {"policy": "grid-sweep", "amplitude": 1e-4},
        },
    },
    "probe": {
        "gains": {"lambda": 0.5, "u_max": 0.01, "damping": 1e-8, "dt": 0.01, "error_bound": 20.0},
        "target": [0.0, 0.0, 4.0, 0.0, 0.0],
        "max_steps": 400,
        "distributed": {
            "domain": [[-0.02, -0.02, 0.006, -0.1, -0.1, -0.05], [0.03, 0.02, 0.012, 0.15, 0.1, 0.05]],
            "count": [3, 3, 2, 3, 3, 1],
        },
        "training": {
            "default": {"policy": "axis-probes", "amplitude": 1e-4},
            "structured": {"policy": "random-walk", "T": 60, "amplitude": 0.003},
            "distributed": {"policy": "grid-sweep", "amplitude": 1e-4},
        },
    },
}


def scenario_defaults(plant_id):
    try:
        return copy.deepcopy(_SCENARIOS[plant_id])
    except KeyError:
        raise InvalidInputError(f"no scenario for plant {plant_id!r}; choose from {sorted(_SCENARIOS)}") from None


def scenario_ids():
    return sorted(_SCENARIOS)
