"""Return probabilities and Dirichlet forms for stable-like random walks on nilpotent groups."""
from .engine import (ConvolutionPlan, ReturnSeries, convolve, fit_exponent, power,
                     return_series)
from .errors import BudgetExceeded, CertificationError, DomainError, UsageError
from .groups import Group, GroupElement, get_group
from .measures import (SparseMeasure, build_axis_measure, build_coordinatewise, build_mu_alpha,
                       build_psi, symmetrize_multiplicative)
from .metric import WordMetric
from .polycyclic import MalcevBasis
from .weights import build_weight_system, gamma, propagate_weights

__version__ = "0.1.0"
