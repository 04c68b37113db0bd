"""Exception types raised across the package."""


class ThermoflowError(Exception):
    """Base class for every error raised by thermoflow."""


# capture files
class UnknownMagic(ThermoflowError):
    pass


class Truncated(ThermoflowError):
    pass


class CorruptLength(ThermoflowError):
    pass


# features / file formats
class EmptyCorpus(ThermoflowError):
    pass


class BadMagic(ThermoflowError):
    pass


class VersionMismatch(ThermoflowError):
    pass


class DimMismatch(ThermoflowError):
    pass


# numerics
class NonFiniteInput(ThermoflowError):
    pass


class BoundaryPoint(ThermoflowError):
    pass


class NotADistribution(ThermoflowError):
    pass


class NonFinite(ThermoflowError):
    pass


# training / data
class SingleClassDataset(ThermoflowError):
    pass


class InsufficientData(ThermoflowError):
    pass


class DegenerateClass(ThermoflowError):
    pass


# shared-memory bridge
class BadCapacity(ThermoflowError):
    pass


class SequenceGap(ThermoflowError):
    pass


class RingMissing(ThermoflowError):
    pass


class CheckpointMissing(ThermoflowError):
    pass
