"""Exception types raised across the engine."""


class EncounterError(Exception):
    """Base class for all engine errors."""


class SceneError(EncounterError, ValueError):
    """Invalid scene description."""


class DegenerateGradient(EncounterError):
    """SDF gradient norm vanished (medial axis, shape center)."""


class NoConvergence(EncounterError):
    """Closest-point refinement did not reach the surface."""


class NoSurfaceInRange(EncounterError):
    """Nearest surface is farther than the planner's search range."""


class DegeneratePalmAxis(EncounterError):
    pass


class Unreachable(EncounterError):
    """No IK seed converged to the target pose."""


class OutOfWorkspace(EncounterError, ValueError):
    """Actuator angle outside the five-bar workspace."""


class OutOfRange(EncounterError, ValueError):
    """Requested pin height outside the achievable band."""


class NoSurfaceUnderPin(EncounterError):
    """A pin ray missed every surface in the scene."""


class ParseError(EncounterError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyCondition(EncounterError, ValueError):
    """A presented shape has no responses."""


class ZeroErrorVariance(EncounterError, ArithmeticError):
    """MS_error is zero while conditions differ; F is unbounded."""


class DegenerateInput(EncounterError, ArithmeticError):
    """All ANOVA cells identical; F is 0/0."""
