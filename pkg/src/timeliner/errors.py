"""Exception hierarchy. The CLI maps each family onto an exit code."""


class TimelinerError(Exception):
    """Base class for all library errors."""


class DataError(TimelinerError):
    """Input data is malformed or violates an invariant (exit code 2)."""


class ValidationError(DataError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:10])
        more = "" if len(self.violations) <= 10 else f" (+{len(self.violations) - 10} more)"
        super().__init__(f"{len(self.violations)} violation(s): {lines}{more}")


class DescriptorFileError(DataError):
    pass


class EmptyFileError(DescriptorFileError):
    pass


class RaggedRowError(DescriptorFileError):
    pass


class NonFiniteValueError(DescriptorFileError):
    pass


class ConvergenceError(TimelinerError):
    """A numerical routine failed to converge (exit code 3)."""


class LabelsRequired(TimelinerError):
    """Raised when a TICC region has no cluster label map yet."""
