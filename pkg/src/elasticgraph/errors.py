class ElasticGraphError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ElasticGraphError):
    pass


class DataError(ElasticGraphError):
    """Malformed or unusable input data."""


class NumericError(ElasticGraphError):
    pass


class GraphValidationError(ElasticGraphError):
    pass


class DegenerateDataError(NumericError):
    pass


class DegenerateWeightsError(NumericError):
    pass


class SingularSystemError(NumericError):
    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = tuple(nodes)


class AllTrimmedError(NumericError):
    pass


class NoCandidateError(NumericError):
    pass


class EmptyGraphError(NumericError):
    pass


class NoBranchError(NumericError):
    pass


class SchemaVersionError(DataError):
    pass


class DisconnectedError(DataError):
    pass


class EmptyConsensusError(NumericError):
    pass
