"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes incompatible with an operation."""


class OutOfVocabError(ValueError):
    """Embedding index outside the table's vocabulary."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class TrendSpecError(ConfigError):
    """Malformed trend specification (unsorted or out-of-range segments)."""


class CheckpointError(ConfigError):
    """Checkpoint incompatible with the requested operation."""


class DataError(ValueError):
    """Problem with ingested or generated data."""


class CsvSchemaError(DataError):
    """CSV header does not match the declared schema."""


class DegenerateDataError(DataError):
    """A fitted statistic is degenerate (e.g. constant target column)."""


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""
