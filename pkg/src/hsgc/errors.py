"""Exception hierarchy shared by every stage of the pipeline."""


class HsgcError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(HsgcError):
    """A file does not follow its declared layout."""


class TruncationError(FormatError):
    """A binary payload is shorter or longer than its header announces."""


class DataError(HsgcError):
    """Samples are present but unusable (e.g. non-finite values)."""


class ParameterError(HsgcError, ValueError):
    """A numeric parameter lies outside its domain."""


class SpdError(HsgcError):
    """A matrix expected to be symmetric positive definite is not."""


class EvaluationError(HsgcError):
    """Evaluation cannot be carried out on the given maps."""


class ConfigError(HsgcError):
    """A configuration file entry is unknown, unparsable or out of range."""
