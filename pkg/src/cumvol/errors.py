"""Exception types for engine failures; the CLI maps them onto exit codes."""


class CumvolError(Exception):
    """Base class for engine failures."""


class MassDefectError(CumvolError):
    """Unaccounted probability-mass loss in a single evolution step.

    Raised when the step's mass bookkeeping (captured grid mass plus newly
    truncated mass) fails to add up to the incoming mass within the per-step
    defect budget. Signals an under-resolved grid or a broken input density.
    """


class ConvergenceError(CumvolError):
    """An iteration did not reach its tolerance within the step budget."""


class DomainError(CumvolError):
    """Inputs outside the validity domain of a formula or operation."""
