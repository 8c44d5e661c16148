"""Exception hierarchy shared by all modules."""


class SeqDppError(Exception):
    """Base class for toolkit errors."""


class InputError(SeqDppError, ValueError):
    """Malformed or inconsistent input (shapes, indices, files)."""


class NumericalError(SeqDppError, ArithmeticError):
    """A numerical precondition failed (PSD, conditioning, rank)."""


class NotPSDError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    def __init__(self, message, condition_number=None, diagnostics=None):
        super().__init__(message)
        self.condition_number = condition_number
        self.diagnostics = diagnostics or {}


class DegenerateCandidatesError(NumericalError):
    """Every candidate minor is singular."""


class NonFiniteGradientError(NumericalError):
    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
