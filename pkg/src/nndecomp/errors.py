"""Exception hierarchy shared across the toolkit."""


class NndecompError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(NndecompError):
    """Malformed inputs, shapes, parameters, or files."""


class NumericError(NndecompError):
    """Non-finite values produced where finite ones are required."""


class TrainingError(NndecompError):
    """Optimization diverged.  Carries the step/epoch where it happened."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class InvalidPairError(NndecompError):
    """Bisection refinement got a pair that does not straddle the boundary."""


class SurgeryError(NndecompError):
    """Unit removal would leave a layer empty; carries the layer index."""

    def __init__(self, message: str, layer: int):
        super().__init__(f"{message} (layer {layer})")
        self.layer = layer


class EvaluationError(NndecompError):
    """Contract metrics cannot be computed (e.g. empty boundary subset)."""


class MissingArtifactError(NndecompError):
    """A pipeline stage needs a file an earlier stage should have written."""
