"""Exception classes shared across the package.

Every numerical failure carries machine-readable diagnostics in ``details``
so the CLI can dump them to JSON without string parsing.
"""


class SigmakError(Exception):
    """Base class. ``exit_code`` is the CLI status for this error class."""

    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"error": type(self).__name__, "message": str(self)}
        out.update(jsonable(self.details))
        return out


class ParameterError(SigmakError, ValueError):
    exit_code = 2


class ConeViolationError(SigmakError, ValueError):
    """Argument lies outside the (deformed) positive cone.

    ``details['margins']`` holds the sigma_1..sigma_k values of the offending
    (deformed) point.
    """


class SamplingError(SigmakError, RuntimeError):
    pass


class IdentityPreconditionError(SigmakError, ValueError):
    """A boundary jet does not satisfy the boundary condition it is assumed to."""


class InfeasibleIterateError(SigmakError, RuntimeError):
    pass


class LineSearchError(SigmakError, RuntimeError):
    pass


class NonConvergenceError(SigmakError, RuntimeError):
    pass


class ContinuationError(SigmakError, RuntimeError):
    pass


def jsonable(obj):
    """Plain JSON types; numpy values unwrapped, non-finite floats become None."""
    import math

    import numpy as np

    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
