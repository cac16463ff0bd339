"""Exception hierarchy.

``InputError`` covers anything the caller can fix by supplying different
data (CLI exit code 2). ``LocalizationError`` signals that the pipeline ran
but could not produce a transform (CLI exit code 3).
"""


class SemlocError(Exception):
    pass


class InputError(SemlocError, ValueError):
    """Rejected input: malformed, inconsistent or out-of-range."""


class LabelRangeError(InputError):
    pass


class InvalidDepthError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class InfeasibleScenarioError(InputError):
    pass


class SearchSizeError(InputError):
    pass


class DegenerateConfigurationError(SemlocError, ValueError):
    """Point configuration does not determine a rigid transform."""


class LocalizationError(SemlocError):
    def __init__(self, message, stage=None):
        super().__init__(message if stage is None else f"{stage}: {message}")
        self.stage = stage


class NoModelError(LocalizationError):
    pass
