"""Exception types shared across the package."""


class DiffpaceError(Exception):
    """Base class for package-specific failures."""


class ConfigError(DiffpaceError):
    """Malformed or inconsistent experiment configuration."""


class MissingArtifactError(DiffpaceError):
    """A required file (dataset, checkpoint) does not exist."""


class NumericalError(DiffpaceError):
    """A numerical routine produced non-finite values or diverged."""


class CheckpointError(DiffpaceError):
    """Checkpoint file is corrupt or incompatible with the requested model."""
