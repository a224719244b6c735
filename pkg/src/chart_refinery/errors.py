"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class ChartRefineryError(Exception):
    """Base class for all errors raised by this package."""


# -- session store ----------------------------------------------------------

class InvalidImage(ChartRefineryError):
    """Image payload rejected: bad magic bytes, zero dimensions, or oversize."""


class NotFound(ChartRefineryError):
    """No session (or revision/blob) with the requested id."""


class CorruptRecord(ChartRefineryError):
    """On-disk session record failed schema validation or blob checks."""


class UnknownRecommendation(ChartRefineryError):
    """A referenced recommendation id does not exist in the session."""


class IllegalStatusTransition(ChartRefineryError):
    """Recommendation status change violates PROPOSED -> SELECTED/DISMISSED -> APPLIED."""


# -- model backends ---------------------------------------------------------

class BackendUnreachable(ChartRefineryError):
    """Backend refused the connection or returned a non-retryable error."""


class BackendTimeout(ChartRefineryError):
    """Backend did not answer within the configured timeout (after retries)."""


class EmptyCompletion(ChartRefineryError):
    """Completion contained no extractable code."""


class SpecTooLarge(ChartRefineryError):
    """Plotting-script source exceeds the prompt size cap."""


class RenderValidationFailed(ChartRefineryError):
    """Every edit attempt produced a script that failed to render."""

    def __init__(self, message: str, outcome=None):
        super().__init__(message)
        self.outcome = outcome


class SandboxMisconfigured(ChartRefineryError):
    """Interpreter path invalid or sandbox working root unusable."""


# -- analytics --------------------------------------------------------------

class TooFewRows(ChartRefineryError):
    """Fewer embedding rows than the operation requires."""


class DimensionMismatch(ChartRefineryError):
    """Embedding backend returned vectors of an unexpected dimension."""


class DegenerateCentroids(ChartRefineryError):
    """Two or more centroids coincide; the Davies-Bouldin ratio is undefined."""


class UnclusterableCorpus(ChartRefineryError):
    """Every candidate clustering was degenerate (e.g. all points identical)."""
