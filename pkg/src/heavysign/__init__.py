"""Sign-based and matrix-sign optimizers under heavy-tailed gradient noise."""

from .linalg import msign, newton_schulz, norm, svd
from .noise import NoiseSpec, MatrixNoiseMode, RngStream, estimate_tail_index
from .optim import HyperParams, run
from .problems import make_problem

__version__ = "0.1.0"

__all__ = [
    "HyperParams",
    "MatrixNoiseMode",
    "NoiseSpec",
    "RngStream",
    "estimate_tail_index",
    "make_problem",
    "msign",
    "newton_schulz",
    "norm",
    "run",
    "svd",
]
