"""balloonseg: speech-balloon segmentation for comic pages.

A from-scratch numpy implementation of a VGG-16-style encoder / U-Net
decoder trained with summed BCE and Dice losses, plus the machinery around
it: synthetic page corpus, polygon rasterization, mask vectorization, a
training CLI, and an HTTP review service for the annotator loop.
"""

from .tensor import LayerParams, ShapeError, Tensor

__version__ = "0.1.0"

__all__ = [
    "LayerParams",
    "ShapeError",
    "Tensor",
    "BalloonSegmenter",
    "__version__",
]


def __getattr__(name):
    # estimator pulls in sklearn; keep the base import light
    if name == "BalloonSegmenter":
        from .estimator import BalloonSegmenter

        return BalloonSegmenter
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
