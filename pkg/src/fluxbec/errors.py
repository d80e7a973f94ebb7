"""Exception types raised across the package."""


class FluxBecError(Exception):
    """Base class for all package errors."""


class PhysicsError(FluxBecError):
    """A numerical or physical evaluation failed (CLI exit code 3)."""


class ConfigError(FluxBecError):
    """Invalid configuration (CLI exit code 2)."""


# magnetostatics
class EvaluationTooCloseToConductor(PhysicsError):
    def __init__(self, message, source_index=None, point=None):
        super().__init__(message)
        self.source_index = source_index
        self.point = point


class EllipticConvergenceFailure(PhysicsError):
    pass


# fluxloop
class InvalidWireRadius(FluxBecError, ValueError):
    pass


# trap
class MinimizationDidNotConverge(PhysicsError):
    pass


class SaddleDetected(PhysicsError):
    pass


class NegativeCurvature(PhysicsError):
    pass


class NoLocalExtrema(PhysicsError):
    pass


class FitDidNotConverge(PhysicsError):
    pass


class DegenerateProfile(PhysicsError):
    pass


# quantum dynamics
class NoConvergence(PhysicsError):
    pass


class WindowTooSmall(PhysicsError):
    pass


class StabilityGuardTripped(PhysicsError):
    pass


class MeshMismatch(FluxBecError, ValueError):
    pass


# entanglement
class ZeroProbabilityBranch(PhysicsError):
    pass


# warnings
class FidelityBelowFloor(RuntimeWarning):
    """Branch evolution left the adiabatic regime (fidelity < 0.9)."""


class DegenerateRegimeWarning(RuntimeWarning):
    """A closed-form estimate was evaluated outside its regime of validity."""
