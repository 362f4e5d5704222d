"""Diagonally drift-implicit stochastic Runge-Kutta schemes for weak approximation of Ito SDEs."""

from .errors import SrkError
from .integrator import NewtonConfig, integrate_path, simulate, srk_step
from .montecarlo import (EffortReport, EstimateResult, effort_report, estimate_functional,
                         simulate_stability, tail_slope, weak_order_study)
from .problems import SdeProblem, get_problem, linear_test_problem, sinh_problem, wiener10_problem
from .randvars import THREE_POINT, TWO_POINT, RngStream, WienerIncrements, build_increments
from .stability import (as_stable, coefficients, exact_regions, ms_function, ms_stable,
                        rasterize, stability_check)
from .tableau import (ExtendedButcherTableau, Order1FamilyParams, Order2FamilyParams,
                      build_order1_tableau, build_order2_tableau, catalogue, named_scheme,
                      validate_tableau)

__version__ = "0.1.0"
