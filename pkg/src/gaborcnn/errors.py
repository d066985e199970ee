"""Exception hierarchy shared across the package."""


class GaborCNNError(Exception):
    """Base class for all package errors."""


class ConfigError(GaborCNNError):
    """Invalid parameters or configuration values."""


class ShapeError(GaborCNNError):
    """Incompatible array shapes."""


class DataError(GaborCNNError):
    """Base class for dataset ingestion failures."""


class BadMagicError(DataError):
    """IDX file has an unexpected magic number."""


class TruncatedFileError(DataError):
    """IDX file is shorter than its header promises."""


class CountMismatchError(DataError):
    """Image and label files disagree on item counts."""
