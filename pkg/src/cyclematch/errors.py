"""Exception types shared across the package."""


class CycleMatchError(Exception):
    """Base class for all cyclematch errors."""


class SpecError(CycleMatchError):
    """Invalid generator or training specification."""


class FormatError(CycleMatchError):
    """Malformed or inconsistent serialized file."""


class ZeroDegreeNode(CycleMatchError):
    """Isolated node that the degree-normalized Laplacian cannot handle."""

    def __init__(self, node: int):
        super().__init__(f"node {node} has zero degree")
        self.node = node


class DimensionMismatch(CycleMatchError):
    """Operand shapes do not agree."""


class DegenerateBaseline(CycleMatchError):
    """Coincident camera centers; the epipolar constraint is vacuous."""


class StaleCache(CycleMatchError):
    """Backward pass invoked with a cache from a different forward pass."""


class ConvergenceFailure(CycleMatchError):
    """Eigensolver failed to meet its residual contract."""


class SingularSystem(CycleMatchError):
    """A normal-equation solve failed; the ridge parameter is too small."""


class SinkhornNoConverge(CycleMatchError):
    """Doubly stochastic projection did not reach tolerance; usually a
    near-zero row or column in the projected block."""


class NonFiniteLoss(CycleMatchError):
    """Training loss became NaN or infinite."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


class UnknownKey(CycleMatchError):
    """Config file contains a key that no option recognizes."""
