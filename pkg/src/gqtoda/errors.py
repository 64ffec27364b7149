"""Exception hierarchy shared by every module of the package."""


class GQTodaError(Exception):
    """Base class for all errors raised by gqtoda."""


class PoleError(GQTodaError):
    """A Moebius-shifted point left the chart (1 - k*eps*x == 0)."""


class DomainError(GQTodaError):
    """An argument fell outside the admissible domain (log, division, positivity)."""


class ResonanceError(GQTodaError):
    """A phase-coefficient denominator P(p_i + p_j + ...) vanished."""


class DispersionError(GQTodaError):
    """A soliton mode does not satisfy the dispersion relation."""


class BandOverflowError(GQTodaError):
    """Composition produced a Laurent band wider than the configured maximum."""


class ConsistencyError(GQTodaError):
    """An identity that must hold structurally failed beyond tolerance."""


class StabilityError(GQTodaError):
    """Time step exceeds the integrator's stability bound."""


class BlowUpError(GQTodaError):
    """The integrated state became non-finite."""


class ConfigError(GQTodaError):
    """Invalid run configuration."""
