"""Attention-driven box pseudo-labels and a pixel localizer trained on them.

Pipeline: attention stacks -> candidate maps -> thresholded component
boxes -> blur-composite scoring -> pixel pseudo-labels -> a small
two-channel localizer -> threshold-sweep box metrics. See the module
docstrings for the individual contracts; `attnloc --help` drives the
whole thing from the shell.
"""

from ._kernels import BACKEND
from .errors import PipelineError

__version__ = "0.1.0"
__all__ = ["BACKEND", "PipelineError", "__version__"]
