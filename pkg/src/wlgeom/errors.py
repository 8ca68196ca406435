"""Exception hierarchy shared by all modules."""


class WlGeomError(Exception):
    """Base class for every error raised by this package."""


class InvalidCellError(WlGeomError, ValueError):
    pass


class InvalidParameterError(WlGeomError, ValueError):
    pass


class ResourceLimitError(WlGeomError, RuntimeError):
    pass


class SelfIntersectingFoldError(WlGeomError, ValueError):
    pass


class UnsupportedInputError(WlGeomError, ValueError):
    pass


class UnsupportedPolicyError(WlGeomError, ValueError):
    pass


class IncomparableFingerprintsError(WlGeomError, ValueError):
    pass


class DegenerateParametersError(InvalidParameterError):
    pass


class SamplingFailureError(WlGeomError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnsupportedSizeError(WlGeomError, ValueError):
    pass


class InternalConsistencyError(WlGeomError, AssertionError):
    pass


class EvaluatorError(WlGeomError, RuntimeError):
    def __init__(self, message, argument=None):
        super().__init__(message)
        self.argument = argument


class ParseError(WlGeomError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedLatticeError(ParseError):
    pass


class InvalidInputError(WlGeomError, ValueError):
    pass
