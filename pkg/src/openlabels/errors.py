"""Exception hierarchy. Exit codes: 2 config, 3 gateway, 4 data."""

from __future__ import annotations


class OpenLabelsError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(OpenLabelsError):
    """Invalid configuration value or missing prerequisite setting."""

    exit_code = 2


class GatewayError(OpenLabelsError):
    """Model backend failure: transport, retries exhausted, bad payload."""

    exit_code = 3


class TruncatedResponseError(GatewayError):
    """Backend reported a truncated completion."""


class ContractViolationError(GatewayError):
    """Backend response violates the capability contract (shape, range)."""


class CacheError(GatewayError):
    """Response cache could not be read or written."""


class PartialMatrixError(GatewayError):
    """Entailment scoring failed partway through a matrix.

    Carries how many pairs completed and a resume token; rerunning the same
    scoring call resumes from the cache.
    """

    def __init__(self, message: str, completed: int, total: int, resume_token: str):
        super().__init__(message)
        self.completed = completed
        self.total = total
        self.resume_token = resume_token


class DataError(OpenLabelsError):
    """Invalid input data or invalid operation on current state."""

    exit_code = 4


class ParseError(DataError):
    """Malformed record or response that could not be parsed."""


class ValidationError(DataError):
    """Well-formed input that violates a documented invariant."""


class StateError(DataError):
    """Operation not permitted in the object's current state."""


class ShapeError(DataError):
    """Matrix or vector dimensions do not line up."""


class EmptyDocumentError(DataError):
    """Document has no tokens."""


class DegenerateInputError(DataError):
    """Numerical input admits no meaningful fit (e.g. zero variance)."""


class EmptyClusterError(DataError):
    """Requested cluster has no assigned members."""


class ExtractionError(DataError):
    """Keyphrase extraction failed for too many chunks to continue."""


class SynthesisError(DataError):
    """Label synthesis produced no usable name after retries."""


class GammaUndefinedError(DataError):
    """No long-tail candidates exist, so no promotion threshold this round."""
