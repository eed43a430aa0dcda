"""Exception hierarchy shared by all scalebench modules."""


class BenchError(Exception):
    """Base class for every error raised by scalebench."""


# broker
class DuplicateTopic(BenchError):
    pass


class UnknownTopic(BenchError):
    pass


class NotAssigned(BenchError):
    pass


class NoInstances(BenchError):
    pass


class OffsetOutOfRange(BenchError):
    pass


class StaleCommit(BenchError):
    pass


# engine
class SpecMismatch(BenchError):
    pass


class InvalidMeasurement(BenchError):
    pass


# usecases / workload
class InvalidConfig(BenchError):
    pass


class NotApplicable(BenchError):
    pass


class DimensionNotApplicable(BenchError):
    pass


# harness
class ValidationError(BenchError):
    """Experiment configuration failed validation."""


class SubexperimentFailed(BenchError):
    """The SUT crashed during a subexperiment.

    ``partial`` holds whatever result could be salvaged, if any.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class PersistFailed(BenchError):
    pass


# analysis
class InsufficientSamples(BenchError):
    pass


class MethodNotApplicable(BenchError):
    pass


class IncompleteGrid(BenchError):
    pass
