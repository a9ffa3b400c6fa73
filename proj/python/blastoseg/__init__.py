"""Blastocyst segmentation with U-Net variants and their ensembles."""

from ._core import (
    BlastosegError,
    Model,
    architectures,
    category,
    dice_from_jaccard,
    generate_phantoms,
    metrics,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "BlastosegError",
    "Model",
    "architectures",
    "category",
    "dice_from_jaccard",
    "generate_phantoms",
    "metrics",
    "run",
]
