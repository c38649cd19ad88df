"""Exception types shared across the package."""


class FlowmimicError(Exception):
    """Base class for package errors."""


class ShapeMismatchError(FlowmimicError):
    """Raised when operands of a graph op have non-conforming shapes."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {' vs '.join(map(str, self.shapes))}")


class GradientError(FlowmimicError):
    """Raised when an optimizer step sees a NaN/Inf gradient."""

    def __init__(self, name):
        self.name = name
        super().__init__(f"non-finite gradient on parameter '{name}'")


class CheckpointError(FlowmimicError):
    """Raised when a checkpoint file is missing, corrupt, or wrong version."""


class DataError(FlowmimicError):
    """Raised on malformed demonstration files, manifests, or configs."""


class SimulationError(FlowmimicError):
    """Raised when the simulator is asked for something it cannot do."""


class TrainingError(FlowmimicError):
    """Raised when a training run diverges or is misconfigured."""
