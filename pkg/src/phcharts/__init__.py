"""
phcharts: normal forms, charts, templates and QNI diagnostics at a fixed
point of partially hyperbolic model maps of R^3.

Submodules
----------
jets       truncated multivariate Taylor arithmetic
models     closed-form model maps and scenario files
splitting  dominated splitting frames and Lyapunov exponents
nform      normal-form leaf parametrisations and the Hopf brush
charts     cocycle reductions and good unstable charts
templates  template extraction, transformation law and dichotomy test
approx     spread condition, polynomial and rational approximation
qni        empirical quantitative non-integrability scans
compat     stable/unstable chart compatibility and joint surfaces
cli        pipeline orchestration and command line
"""
__version__ = "0.1.0"

from .errors import (ContractError, DomainError, NumericalError, PhchartsError,  # noqa: E402
                     ValidationError)
from .jets import Jet, jet_compose, jet_eval, jet_inverse  # noqa: E402
from .models import ModelMap, Scenario, load_scenario, make_model, scenario_from_dict  # noqa: E402

__all__ = ["__version__", "Jet", "jet_compose", "jet_eval", "jet_inverse", "ModelMap",
           "Scenario", "load_scenario", "make_model", "scenario_from_dict", "PhchartsError",
           "ContractError", "DomainError", "NumericalError", "ValidationError"]
