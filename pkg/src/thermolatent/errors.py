"""Exception types shared across the package.

Every class carries a short machine-readable ``code`` so the CLI can emit
structured diagnostics; the exception message is the human-readable part.
"""


class ThermoLatentError(Exception):
    """Base class for all package-specific failures."""

    code = "error"


class TsfFormatError(ThermoLatentError):
    """A TSF container is malformed (bad magic, unknown version, bad header)."""

    code = "tsf-format"


class TsfTruncatedError(TsfFormatError):
    """A TSF payload holds fewer samples than its header claims."""

    code = "tsf-truncated"


class NonFiniteDataError(ThermoLatentError):
    """Input samples contain NaN or infinity."""

    code = "non-finite-data"


class ConvergenceError(ThermoLatentError):
    """The eigensolver did not reach tolerance within its sweep cap."""

    code = "eigensolver-no-convergence"


class TrainingDivergenceError(ThermoLatentError):
    """Training produced non-finite activations or losses."""

    code = "training-divergence"


class MaskError(ThermoLatentError):
    """A region mask is empty, overlapping, or mismatched in shape."""

    code = "mask-invalid"


class DegenerateRegionError(ThermoLatentError):
    """A metric is undefined on the given regions (e.g. zero-variance sound area)."""

    code = "degenerate-region"


class SpecimenError(ThermoLatentError):
    """A synthetic specimen description violates its constraints."""

    code = "specimen-invalid"


class PgmFormatError(ThermoLatentError):
    """A PGM image file is malformed."""

    code = "pgm-format"


class ModelFormatError(ThermoLatentError):
    """A persisted PCA or network model file is malformed."""

    code = "model-format"


class ConfigError(ThermoLatentError):
    """A JSON configuration file is missing, unparsable, or inconsistent."""

    code = "config-invalid"
