from __future__ import annotations

from typing import Any, Dict


class RealizationError(Exception):
    """Base class for every error raised by the realization services."""

    code = "realization_error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"error": self.code, "message": str(self)}
        payload.update({k: v for k, v in self.details.items() if v is not None})
        return payload


# ---------- конфигурации ----------
class ConfigurationError(RealizationError, ValueError):
    code = "configuration_invalid"


class Overlap(ConfigurationError):
    code = "overlap"

    def __init__(self, j: int, k: int) -> None:
        super().__init__(f"circles {j} and {k} intersect or are tangent", j=j, k=k)


class CenterOnCircle(ConfigurationError):
    code = "center_on_circle"

    def __init__(self, j: int, k: int) -> None:
        super().__init__(f"center of circle {k} lies on circle {j}", j=j, k=k)


class NonpositiveRadius(ConfigurationError):
    code = "nonpositive_radius"

    def __init__(self, k: int) -> None:
        super().__init__(f"circle {k} has a non-positive radius", k=k)


class DuplicateCircle(ConfigurationError):
    code = "duplicate_circle"

    def __init__(self, j: int, k: int) -> None:
        super().__init__(f"circles {j} and {k} coincide", j=j, k=k)


class InvalidInput(ConfigurationError):
    code = "invalid_input"


class AugmentationFailed(RealizationError):
    code = "augmentation_failed"


class ClearanceTooSmall(RealizationError):
    code = "clearance_too_small"


# ---------- алгебра ----------
class DivisionByZeroPolynomial(RealizationError, ZeroDivisionError):
    code = "division_by_zero_polynomial"


class UndefinedOrder(RealizationError, ValueError):
    code = "undefined_order"


# ---------- численные ----------
class QuadratureNotConverged(RealizationError):
    code = "quadrature_not_converged"


class ScalingVanishesOnCycle(RealizationError):
    code = "scaling_vanishes_on_cycle"


class StepUnderflow(RealizationError):
    code = "step_underflow"


class NonFiniteState(RealizationError):
    code = "non_finite_state"


class NoReturn(RealizationError):
    code = "no_return"


class Indeterminate(RealizationError):
    code = "indeterminate"
    partial: Any = None


class TestCircleInvalid(RealizationError):
    code = "test_circle_invalid"
    __test__ = False  # not a pytest class
