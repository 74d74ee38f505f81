"""Exception hierarchy for the fedsynth pipeline.

Errors are grouped by how the command-line driver maps them to exit codes:
configuration/validation problems, numerical divergence during training, and
privacy-budget exhaustion.
"""


class FedsynthError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(FedsynthError):
    """A config file, schema, CSV, or argument failed validation."""


class SchemaError(ValidationError):
    """A schema declaration is malformed or inconsistent with the data."""


class CsvFormatError(ValidationError):
    """A CSV file could not be parsed against its declared schema."""


class CheckpointError(ValidationError):
    """A checkpoint file is missing, corrupt, or built from another config."""


class DivergenceError(FedsynthError):
    """Training produced non-finite losses, gradients, or parameters."""


class PrivacyBudgetError(FedsynthError):
    """The privacy budget cannot accommodate the requested training plan."""


class CalibrationError(PrivacyBudgetError):
    """No noise multiplier in the search bracket meets the epsilon target."""
