"""Bridge pretrained vision transformers into the attnloc wire formats.

The exporter talks to the localization toolkit only through files:
TNSR tensors, the manifest CSV, the proposal-boxes CSV, and the scores
CSV. It deliberately does not import the toolkit.
"""

__version__ = "0.1.0"


class ExportError(Exception):
    """Any exporter failure that should stop the run."""
