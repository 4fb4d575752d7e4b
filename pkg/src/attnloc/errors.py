"""Exception hierarchy for the pipeline.

CLI exit-code mapping: usage errors exit 1, any :class:`PipelineError`
except :class:`NumericError` exits 2, :class:`NumericError` exits 3.
"""


class PipelineError(Exception):
    """Base class for all pipeline errors."""


class IoError(PipelineError):
    """File could not be read or written."""


class FormatError(PipelineError):
    """A file exists but does not match its declared wire format."""


class InvalidInput(PipelineError):
    """An in-memory input violates a precondition (non-finite values, bad shape)."""


class InsufficientHeads(InvalidInput):
    """Attention stack has fewer heads than the candidate selection needs."""


class DegenerateMap(PipelineError):
    """Map occupies a single histogram bin; no threshold separates it."""


class InvalidParam(PipelineError):
    """A numeric parameter is outside its valid range."""


class NoProposal(PipelineError):
    """Proposal selection was asked to choose from an empty list."""


class InvalidDataset(PipelineError):
    """Dataset cannot support the requested operation (e.g. single class)."""


class EmptyBackground(PipelineError):
    """Selected box covers the whole image; no background pixels exist."""


class InvalidLabels(PipelineError):
    """Pseudo-label sets are empty where the loss requires members."""


class DegeneratePooling(PipelineError):
    """Foreground mass too small to pool a class feature."""


class NumericError(PipelineError):
    """A loss or gradient became non-finite during optimization."""
