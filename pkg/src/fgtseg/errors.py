"""Exception types shared across the package.

Data-shaped problems derive from ``DataError`` (a ``ValueError``) so the CLI can
map them to its data-error exit code without enumerating every subclass.
"""


class FGTSegError(Exception):
    """Base class for all package errors."""


class DataError(FGTSegError, ValueError):
    """Input data violates a contract."""


class ShapeMismatch(DataError):
    pass


class ConstantVolume(DataError):
    """Volume has zero variance, so z-scoring is undefined."""


class EmptyMask(DataError):
    pass


class BoxOutOfBounds(DataError):
    pass


class InfeasibleSpec(DataError):
    pass


class NonPositiveBaseline(DataError):
    pass


class DegenerateInput(DataError):
    """Zero variance or too few samples for a statistic."""


class TooFewValues(DataError):
    pass


class TooFewCases(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyEnsemble(DataError):
    pass


class MissingCase(DataError):
    def __init__(self, case_ids):
        self.case_ids = sorted(case_ids)
        super().__init__(f"missing cases: {', '.join(self.case_ids)}")


class ConfigError(FGTSegError, ValueError):
    pass


class ShapeError(FGTSegError, ValueError):
    """Network input shape is incompatible with the architecture."""


class DivergedLoss(FGTSegError, RuntimeError):
    pass


class EmptySide(UserWarning):
    """One breast side has no mask voxels; only the other side is processed."""

    def __init__(self, side: str):
        self.side = side
        super().__init__(f"breast mask has no voxels on the {side} side")
