"""Exception hierarchy shared by all pipeline stages."""


class GctError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfig(GctError, ValueError):
    pass


class DimensionMismatch(GctError, ValueError):
    pass


class GeometryMismatch(GctError, ValueError):
    pass


class UnknownPair(GctError, KeyError):
    pass


class InstanceTooLarge(GctError, ValueError):
    pass


class InsufficientData(GctError, ValueError):
    pass


class LabelOutOfRange(GctError, ValueError):
    pass


class SingularCovariance(GctError, ValueError):
    pass


class EmptyTrainingSet(GctError, ValueError):
    pass


class NoReferences(GctError, ValueError):
    pass


class IndexOutOfGrid(GctError, IndexError):
    pass


class MissingGroundTruth(GctError, KeyError):
    pass


class DatasetError(GctError):
    """Raised for malformed manifests, missing files and duplicate entries."""
