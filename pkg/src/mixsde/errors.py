"""Exception types shared across the package.

Each carries a stable ``code`` so the CLI can map failures to exit statuses
and machine-readable error payloads.
"""


class MixSDEError(Exception):
    code = "error"
    exit_status = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"error": self.code, "message": str(self)}
        out.update({k: _jsonable(v) for k, v in self.details.items()})
        return out


def _jsonable(v):
    try:
        import numpy as np

        if isinstance(v, np.generic):
            return v.item()
        if isinstance(v, np.ndarray):
            return v.tolist()
    except ImportError:  # pragma: no cover
        pass
    return v


class ConfigError(MixSDEError, ValueError):
    code = "invalid_config"
    exit_status = 2


class UnknownModelError(ConfigError):
    code = "unknown_model"
    exit_status = 3


class HurstRangeError(MixSDEError, ValueError):
    code = "invalid_hurst"
    exit_status = 4


class ResourceLimitError(MixSDEError):
    code = "resource_limit"
    exit_status = 5


class GridError(MixSDEError, ValueError):
    code = "invalid_grid"
    exit_status = 6


class NonFiniteStateError(MixSDEError, FloatingPointError):
    code = "non_finite_state"
    exit_status = 7


class ConvergenceError(MixSDEError):
    code = "no_convergence"
    exit_status = 8


class DivergentIntegralError(ConvergenceError):
    code = "divergent_integral"


class StructuralError(MixSDEError, ValueError):
    code = "structural_mismatch"
    exit_status = 9


class BoundarySpecError(MixSDEError, ValueError):
    code = "boundary_spec"
    exit_status = 10
