"""Generalized fiducial distributions for one-parameter models."""

__version__ = "0.1.0"

from .dge import DgeSpec, jacobian, limit_jacobian
from .estimator import GeneralizedFiducial
from .exceptions import GfdError
from .fiducial import DensityOptions, FiducialDensity, build_density
from .matching import delta1, delta2, match_report
from .models import MODEL_IDS, get_model, mle
from .simharness import SimConfig, exactness_suite, run_simulation

__all__ = [
    "__version__",
    "DgeSpec",
    "DensityOptions",
    "FiducialDensity",
    "GeneralizedFiducial",
    "GfdError",
    "MODEL_IDS",
    "SimConfig",
    "build_density",
    "delta1",
    "delta2",
    "exactness_suite",
    "get_model",
    "jacobian",
    "limit_jacobian",
    "match_report",
    "mle",
    "run_simulation",
]
