class SlackfreeError(Exception):
    pass


class InvalidInstanceError(SlackfreeError, ValueError):
    pass


class ParseError(SlackfreeError, ValueError):
    """Malformed instance text. ``line`` is 1-based, or None when the
    problem is with the stream as a whole (e.g. truncation)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(SlackfreeError):
    """QUBO is too large for the requested backend."""

    def __init__(self, backend, n_vars, limit):
        self.backend = backend
        self.n_vars = n_vars
        self.limit = limit
        super().__init__(f"{backend}: {n_vars} variables exceeds limit of {limit}")


class SolverError(SlackfreeError, RuntimeError):
    pass


class MetricError(SlackfreeError, ValueError):
    pass
