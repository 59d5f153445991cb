"""Adaptive coordinate-based regression (ACR) loss for face alignment."""
from .errors import (
    AcrError,
    ConfigError,
    DegenerateGeometryError,
    InsufficientDataError,
    InvalidInputError,
    NumericalError,
    ParseError,
)
from .hardness import hardness_weights
from .loss import (
    AcrLossConfig,
    LossReport,
    acr_grad_elem,
    acr_loss_batch,
    acr_loss_elem,
    delta,
    l2_loss_batch,
)
from .metrics import EvalSummary, evaluate, mean_point_error, normalization_factor
from .shape_model import (
    DEFAULT_SCHEDULE,
    EigFractionSchedule,
    ShapeModel,
    clamp_params,
    fit_shape_model,
    fraction_for_epoch,
    project,
    smooth_face,
)

__version__ = "0.1.0"
