class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


class DataFormatError(ValueError):
    """Malformed event or coincidence file (CLI exit code 3)."""


class PhysicsError(ValueError):
    """Parameters outside the physical (positive semidefinite) region (CLI exit code 4)."""
