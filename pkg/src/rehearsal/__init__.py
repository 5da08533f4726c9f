"""Non-parametric rehearsal learning: choose actions that keep outcomes in a desired region."""

from .dataset import ObservationalDataset, Role, VariableSchema, load_csv
from .estimator import EstimatorConfig, FittedNestedEstimator, fit, fit_conditional
from .optimizer import ActionBox, OptimizerConfig, optimize
from .region import PolytopeRegion, SmoothedDesirability

__all__ = [
    "ActionBox",
    "EstimatorConfig",
    "FittedNestedEstimator",
    "ObservationalDataset",
    "OptimizerConfig",
    "PolytopeRegion",
    "Role",
    "SmoothedDesirability",
    "VariableSchema",
    "fit",
    "fit_conditional",
    "load_csv",
    "optimize",
]
