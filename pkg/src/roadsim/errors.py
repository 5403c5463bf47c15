"""Exception hierarchy shared by all engine modules."""


class RoadSimError(Exception):
    """Base class for every error raised by this package."""


class MalformedMapError(RoadSimError):
    """A map file or map element violates the format contract.

    Carries the offending element id in ``element_id`` when known.
    """

    def __init__(self, message, element_id=None):
        super().__init__(message)
        self.element_id = element_id


class MapLookupError(RoadSimError, KeyError):
    """An id (lane, linestring, participant, agent) does not resolve."""

    def __str__(self):  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class SchemaError(RoadSimError):
    """A trajectory CSV does not match the selected adapter schema."""


class DataError(RoadSimError):
    """Trajectory data is internally inconsistent (e.g. duplicate timestamps)."""


class ConfigError(RoadSimError):
    """A scenario or model configuration is invalid or incomplete."""


class LoadError(RoadSimError):
    """A referenced file could not be read or parsed."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class SpawnError(RoadSimError):
    """An agent spawn pose conflicts with an existing participant."""


class ContractError(RoadSimError):
    """The caller violated the step/reset API contract."""
