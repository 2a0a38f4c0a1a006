"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
TrainingError -> 3.
"""


class RankDistillError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(RankDistillError):
    """Invalid or inconsistent experiment configuration."""


class DataError(RankDistillError):
    """Problem with input data (files, datasets, score tables)."""


class ParseError(DataError):
    """A line of an input file could not be parsed."""


class SizingError(DataError):
    """A split plan asks for more queries than the dataset provides."""


class TrainingError(RankDistillError):
    """Model training failed or diverged."""
