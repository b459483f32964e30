"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument violates an operation's precondition."""


class ParseError(ValueError):
    """Malformed serialized input.

    Carries a `location` string (e.g. "edges[3]") pointing at the offending
    part of the input.
    """

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(message if location is None else f"{location}: {message}")


class ValidationError(ValueError):
    """A machine, rule table or model class is internally inconsistent."""


class TooLargeError(RuntimeError):
    """A configured size cap was exceeded.

    `explored` holds how many objects were built before giving up, when known.
    """

    def __init__(self, message, explored=None):
        self.explored = explored
        super().__init__(message)


class EvaluationError(RuntimeError):
    """A composed transition evaluator failed on a concrete (state, multiset) pair."""
