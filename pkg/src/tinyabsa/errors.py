"""Exception types shared across the toolkit."""


class TinyAbsaError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(TinyAbsaError):
    """Tensor or parameter shapes do not line up."""


class ConfigurationError(TinyAbsaError):
    """A config value is out of its legal range or names an unknown option."""


class ContractError(TinyAbsaError):
    """An operation was called outside its documented contract."""


class LabelError(TinyAbsaError):
    """A class label is outside the legal label set."""


class NonFiniteError(TinyAbsaError):
    """A forward op produced NaN or Inf from finite inputs."""


class ParseError(TinyAbsaError):
    """An input file is malformed; the message carries the line number."""


class ValidationError(TinyAbsaError):
    """A record violates a data invariant; the message names the record."""


class StratificationError(TinyAbsaError):
    """A label has too few members to populate every split."""


class EncodingError(TinyAbsaError):
    """An example cannot be encoded without losing its aspect."""


class EmbeddingLookupError(TinyAbsaError):
    """A requested example id is missing from a precomputed-embedding file."""


class AggregationError(TinyAbsaError):
    """Too few per-seed values to aggregate."""


class ReportError(TinyAbsaError):
    """An experiment report is missing a required cell."""


class TrainingDivergedError(TinyAbsaError):
    """Training hit a non-finite loss; the message names epoch and batch."""
