"""Exception hierarchy shared by all modules."""


class HoloQHDError(Exception):
    """Base class for library errors."""


class DimensionalityError(HoloQHDError, ValueError):
    pass


class ParameterError(HoloQHDError, ValueError):
    pass


class TopologyError(HoloQHDError, ValueError):
    pass


class GeometryError(HoloQHDError, ValueError):
    pass


class ProximityError(HoloQHDError, ValueError):
    """A loop, filament or evaluation region comes too close to a node or core."""


class ComponentCountError(HoloQHDError, ValueError):
    pass


class NumericalAbort(HoloQHDError, RuntimeError):
    pass


class DomainExitError(NumericalAbort):
    pass


class SnapshotFormatError(HoloQHDError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ConfigError(HoloQHDError, ValueError):
    """Carries every validation problem found, each tagged with its key path."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {msg}" for k, msg in self.errors))
