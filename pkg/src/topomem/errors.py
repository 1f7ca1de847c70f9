"""Exception types raised by the simulation modules."""


class TopomemError(Exception):
    """Base class for domain errors."""


class GapClosed(TopomemError):
    """Bloch vector passes through the origin; the winding number is undefined."""


class NotTopological(TopomemError):
    """Zero modes requested for parameters in the trivial phase."""


class DomainTooWeak(TopomemError):
    """Local Zeeman field too weak to open a mass domain."""


class LeakageExceeded(TopomemError):
    """Population left the midgap pair during a ramp (ramp too fast)."""


class CavityLeak(TopomemError):
    """Cavity photon not returned to vacuum by the ancilla sequence."""


class StepSizeError(TopomemError):
    """Fixed-step integrator drifted in trace; the step is too large."""


class ConvergenceError(TopomemError):
    """Step-halving self-check exceeded its tolerance."""


class QuadratureError(TopomemError):
    """Numerical integration did not reach the requested accuracy."""
