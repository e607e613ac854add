"""Exception types raised by curvedistill."""


class CurveError(ValueError):
    """Base class for all curvedistill errors."""


class TransformDomainError(CurveError):
    """An x-value lies outside the admissible domain of a transform."""


class InvalidCurveError(CurveError):
    """Control points do not describe a valid curve."""


class MissingFeatureError(CurveError, KeyError):
    """A feature required by a model is absent from the input."""

    def __init__(self, names):
        self.names = tuple(names)
        super().__init__('missing feature(s): ' + ', '.join(self.names))

    def __str__(self):
        return self.args[0]


class InvalidKnotsError(CurveError):
    """Knot list is too short or not strictly increasing."""


class InvalidBoundsError(CurveError):
    """Slope bounds are infeasible."""


class InsufficientDataError(CurveError):
    """Not enough distinct data to fit a curve."""


class InvalidConfigError(CurveError):
    """A fitting configuration violates its invariants."""


class CurveSyntaxError(CurveError):
    """Curve literal text could not be parsed."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f'{message} (line {line}, column {column})')


class DistillationError(CurveError):
    """One or more features failed to distill."""

    def __init__(self, failures):
        self.failures = dict(failures)
        detail = '; '.join(f'{name}: {err}' for name, err in self.failures.items())
        super().__init__(f'distillation failed for {len(self.failures)} feature(s): {detail}')
