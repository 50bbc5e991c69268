"""Adaptive sensorimotor servo control with online Jacobian estimation."""

from .core import (
    GainSettings,
    apply_command,
    cost_J,
    predict_feature,
    pseudo_inverse_solve,
    saturate,
    servo_command,
    to_velocity,
)
from .distributed import (
    ComputingUnit,
    DistributedJacobianEstimator,
    LocalizedObservation,
    UnitNetwork,
    allocate_units,
    combined_cost_H,
    cost_W,
    load_network,
    neighborhood_weight,
    query_jacobian,
    save_network,
    train_network,
    train_unit,
    winner,
)
from .instant import (
    BroydenJacobianEstimator,
    InstantGradientEstimator,
    ObservationDU,
    broyden_update,
    cost_V,
    gradient_update_V,
)
from .plants import (
    BeamPlant,
    CameraArmPlant,
    FunctionPlant,
    LinearPlant,
    ProbePlant,
    finite_difference_jacobian,
    regressor_for,
)
from .structured import (
    FitSchedule,
    ObservationYX,
    RegressorModel,
    StructuredJacobianEstimator,
    cost_U,
    fit,
    grad_U,
    jacobian_from_parameters,
    update_parameters,
)

__version__ = "0.1.0"
