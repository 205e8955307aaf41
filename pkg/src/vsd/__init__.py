"""Variational search distributions for active generation over sequences."""

from . import blackbox, cpe, genmodel, gp, metrics, seqcore, strategies, vi
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "blackbox", "cpe", "genmodel", "gp", "metrics", "seqcore",
           "strategies", "vi"]
