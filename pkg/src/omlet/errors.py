"""Exception types raised across the package."""


class OmletError(Exception):
    """Base class for all package errors."""


class DegenerateFit(OmletError):
    """Least-squares line fit requested on points sharing one x value."""


class EmptyPointSet(OmletError):
    """A trapezoid cannot be initialized from zero desired points."""


class FrozenTrapezoid(OmletError):
    """An update was attempted on a frozen membership function."""


class EmptyInput(OmletError):
    """A combiner received no inputs."""


class UnknownCategory(OmletError):
    pass


class CyclicDefinition(OmletError):
    pass


class MissingMeasurement(OmletError):
    def __init__(self, range_id, message=None):
        self.range_id = range_id
        super().__init__(message or f"missing measurement for range {range_id!r}")


class SaturatedParent(OmletError):
    """POR inverse is undefined when the known input is already 1."""


class NoExamplesForLevel(OmletError):
    def __init__(self, level, message=None):
        self.level = level
        super().__init__(message or f"no training examples for learning level {level}")


class PartialModel(OmletError):
    """The model has untrained ranges needed for the requested evaluation."""


class ParseError(OmletError):
    def __init__(self, line, message):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line else message)


class DesiredOutOfRange(ParseError):
    pass


class HistogramInfeasible(OmletError):
    pass


class SizeTooLarge(OmletError):
    pass
