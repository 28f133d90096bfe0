"""Stability certificates for parametric convex inequality systems.

The feasible set ``F(p) = {x : f_t(x) <= p_t for all t}`` of a finite (or
truncated countable) family of affine, convex quadratic and max-affine
constraints is analysed around the nominal parameter ``p = 0``: strong Slater
condition, distance to feasibility, exact Lipschitz bound, coderivative
norm and membership, Farkas consequences and stationarity certificates.
"""

__version__ = "0.1.0"

from .config import DEFAULT_TOLERANCES, Tolerances
from .convex_core import (Affine, GridConfig, InequalitySystem, MaxAffine, Parameter, Quadratic,
                          conjugate_graph_sample, conjugate_value, evaluate, residual, subgradient)
from .errors import (DimensionError, InfeasiblePointError, InfeasibleSystemError, SipstabError,
                     SpecError, SSCViolationError)
from .linearize import LinearSystem, embed_parameter, linearization_gap, linearize_system
from .charset import (ActiveIndexSet, CharacteristicCloud, active_indices, build_characteristic,
                      epsilon_active_cloud)
from .minnorm import (ConeWeights, SimplexWeights, cone_distance, constrained_min_norm,
                      fractional_sup, min_norm_point, nnls)
from .stability import (ModulusCertificate, QuotientSample, SlaterCertificate, check_ssc,
                        coderivative_member, coderivative_norm, distance_dual, distance_primal,
                        lip_bound, lip_sample)
from .optimality import (ConsequenceQuery, StationarityCertificate, check_stationarity_smooth,
                         check_stationarity_upper, farkas_consequence, normal_cone_member)
from .scenario_io import Report, Scenario, load_scenario, run_scenario, write_report

__all__ = [name for name in dir() if not name.startswith("_")]
