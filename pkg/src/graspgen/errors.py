"""Exception types shared across the toolkit.

Everything raised on purpose derives from GraspgenError so callers (and the
CLI) can distinguish our validation/solver failures from genuine bugs.
"""


class GraspgenError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(GraspgenError):
    """Malformed input: bad file, bad config, bad shape. CLI exit code 2."""


class DimensionMismatch(ValidationError):
    """An array does not have the size an operation requires."""

    def __init__(self, what, expected, got):
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected {expected}, got {got}")


class DegenerateRotation(GraspgenError):
    """6D rotation input whose two columns are (near) parallel or zero."""


class SolverDivergence(GraspgenError):
    """Iterative solver failed to decrease its objective. Carries the last iterate."""

    def __init__(self, message, last_iterate=None, history=None):
        self.last_iterate = last_iterate
        self.history = history
        super().__init__(message)


class GradientError(GraspgenError):
    """Non-finite gradient encountered. Carries the offending parameter name."""

    def __init__(self, param_name):
        self.param_name = param_name
        super().__init__(f"non-finite gradient for parameter '{param_name}'")


class TrainingAborted(GraspgenError):
    """Training hit a non-finite loss. Carries the last good checkpoint path."""

    def __init__(self, message, checkpoint_path=None, history=None):
        self.checkpoint_path = checkpoint_path
        self.history = history
        super().__init__(message)


class RolloutDiverged(GraspgenError):
    """Simulated state blew up. Carries the partial history."""

    def __init__(self, message, history=None):
        self.history = history
        super().__init__(message)


class PlanningFailure(GraspgenError):
    """Planner exhausted its budget. Carries the meter state at failure."""

    def __init__(self, message, meter=None):
        self.meter = meter
        super().__init__(message)


class InfeasibleSpec(ValidationError):
    """Synthetic demo spec cannot produce a feasible grasp (e.g. object too big)."""


class StageError(GraspgenError):
    """A pipeline stage failed. CLI exit code 3."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
