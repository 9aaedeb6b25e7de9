"""Exception hierarchy shared across harlab modules.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
cell failures (TrainingError, NumericalError or anything else raised
inside an experiment cell) -> 3.
"""


class HarlabError(Exception):
    """Base class for all harlab errors."""


class ConfigError(HarlabError):
    """Invalid configuration: bad layer specs, feature arithmetic, manifests."""


class DataError(HarlabError):
    """Invalid input data: malformed CSV rows, bad labels, empty splits."""


class TrainingError(HarlabError):
    """Training aborted (e.g. non-finite gradients), with epoch/layer context."""


class NumericalError(HarlabError):
    """A numerical routine produced non-finite or ill-conditioned results."""
