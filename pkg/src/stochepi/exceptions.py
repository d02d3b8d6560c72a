class StochEpiError(Exception):
    """Base class for errors raised by this package."""


class InvalidPopulationError(StochEpiError, ValueError):
    pass


class InvalidParameterError(StochEpiError, ValueError):
    pass


class InvalidGridError(StochEpiError, ValueError):
    pass


class FilterFailureError(StochEpiError):
    """Every particle had zero weight where a likelihood was required."""


class NoPathError(StochEpiError):
    pass


class TuningError(StochEpiError):
    """Pilot tuning could not reach the target acceptance band.

    ``trace`` holds one ``(h, acceptance_rate)`` pair per adjustment.
    ``partial`` is the best setting found so far (a ``TuningResult``), when
    there is one, so callers may choose to carry on with it.
    """

    def __init__(self, message, trace=(), partial=None):
        super().__init__(message)
        self.trace = list(trace)
        self.partial = partial


class EpsilonTooSmallError(StochEpiError):
    pass


class EmptyChainError(StochEpiError, ValueError):
    pass


class ConfigError(StochEpiError, ValueError):
    """Scenario configuration failed validation; ``path`` names the field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class ParseError(StochEpiError, ValueError):
    def __init__(self, filename, line, message):
        super().__init__(f"{filename}:{line}: {message}")
        self.filename = filename
        self.line = line
