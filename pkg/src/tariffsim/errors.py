"""Exception hierarchy shared across the package."""


class TariffSimError(Exception):
    """Base class for all errors raised by tariffsim."""


class RejectedInput(TariffSimError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(TariffSimError, ValueError):
    """Tariff or run parameters are missing or inconsistent."""


class AssemblyError(TariffSimError, ValueError):
    """A consumer problem could not be turned into a linear program."""


class SolverError(TariffSimError, RuntimeError):
    """The simplex solver broke down or exceeded its iteration cap."""


class CalibrationError(TariffSimError, RuntimeError):
    """No scaling of a tariff parameter reaches the reference revenue."""


class IngestionError(TariffSimError, ValueError):
    """A data file is malformed; the message carries the line number."""


class InvariantViolation(TariffSimError, AssertionError):
    """A produced result broke one of its post-conditions."""


class OutputError(TariffSimError, OSError):
    """A result file could not be written; the message names the path."""
