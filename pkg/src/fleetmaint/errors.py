"""Exception hierarchy shared by all fleetmaint modules."""


class FleetMaintError(Exception):
    """Base class for all errors raised by this package."""


class SchemaMismatchError(FleetMaintError):
    """Feature/sensor layout does not match what the operation expects."""


class InvalidInputError(FleetMaintError):
    """A numeric input is NaN, infinite, or otherwise unusable."""


class OutOfRouteError(FleetMaintError):
    """A telemetry timestamp falls outside the vehicle's route interval."""


class InvalidFilterError(FleetMaintError):
    """A topic filter violates the wildcard grammar."""


class DuplicateMessageError(FleetMaintError):
    """A message id was already published on this broker."""


class CatalogError(FleetMaintError):
    """A part or sensor reference cannot be resolved against the catalog."""


class ScenarioError(FleetMaintError):
    """Scenario file failed to parse or validate.  CLI exit code 2."""


class IntegrityError(FleetMaintError):
    """An event log is truncated or internally inconsistent.  CLI exit code 3."""
