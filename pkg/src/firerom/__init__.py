"""Reduced-order models with shifted modes and shifted DEIM for a 1D wildland fire model."""

from .errors import (DimensionError, FireRomError, FormatError, IntegrationError,
                     InvalidInputError, OfflineError, OnlineError, SelectionError,
                     TrackingError, UndefinedErrorMetric)
from .fom import (DiffOps, FireParams, FullOrderModel, FullState, Grid1D, arrhenius_rate,
                  fom_rhs, initial_condition_gaussian, initial_condition_separated,
                  nonlinearity_f)
from .integrate import IntegratorConfig, OdeSolution, solve_ivp
from .metrics import relative_l2_error
from .model import PodRom, ReducedModel, load_model, save_model

__version__ = "0.1.0"
