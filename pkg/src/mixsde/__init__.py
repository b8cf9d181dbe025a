"""Simulation, pathwise integration and pricing for SDEs driven by a Wiener
process and a fractional Brownian motion."""

__version__ = "0.1.0"

from .errors import (
    BoundarySpecError,
    ConfigError,
    ConvergenceError,
    DivergentIntegralError,
    GridError,
    HurstRangeError,
    MixSDEError,
    NonFiniteStateError,
    ResourceLimitError,
    StructuralError,
    UnknownModelError,
)
from .noise import SamplePath, SeedSpec, TimeGrid, gen_fbm, gen_wiener
from .solver import CirParams, MixedModel, build_model, euler_mixed, solve_cir, solve_vasicek
from .fracalc import FracParams, gls_integral, integral_bound
from .kernel import KernelGrid, solve_kernel, simulate_decomposition, solve_cir_transformed
from .pricing import PriceReport, hitting_experiment, mc_price, reproduce_table, upper_bound_price, vasicek_moments
