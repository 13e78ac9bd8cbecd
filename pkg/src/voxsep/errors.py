"""Exception types shared across voxsep."""


class VoxsepError(Exception):
    """Base class for all voxsep errors."""


class InvalidArgument(VoxsepError, ValueError):
    pass


class ShapeError(VoxsepError, ValueError):
    pass


class ConfigError(VoxsepError):
    pass


class FormatError(VoxsepError):
    pass


class MissingStem(VoxsepError):
    def __init__(self, role):
        super().__init__(f"missing stem file for role '{role}'")
        self.role = role


class StatError(VoxsepError):
    pass


class StateError(VoxsepError):
    pass


class EnvelopeUndefined(VoxsepError):
    pass


class UndefinedMetric(VoxsepError):
    pass


class EmptyEvaluation(VoxsepError):
    pass
