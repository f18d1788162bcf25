"""Exception types shared across the simulator."""


class RisMimoError(Exception):
    """Base class for all simulator errors."""


class ConfigError(RisMimoError):
    """Scenario or pipeline configuration is inconsistent."""


class DegenerateSpreadError(RisMimoError):
    """Zero azimuth spread requested without the Dirac fallback enabled."""


class NotPsdError(RisMimoError):
    """A matrix required to be positive semidefinite is indefinite beyond tolerance."""


class AssignmentError(RisMimoError):
    """RIS element assignment indices are invalid (out of range or overlapping)."""
