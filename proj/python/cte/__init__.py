"""Convolutional tables ensemble classifier.

Table-lookup convolutional feature extraction with linear voting, trained
by gradient-guided table growth and global convex optimization. The heavy
lifting lives in the C++ extension; this package re-exports the main
operations.
"""

from ._core import Model, load_model, prepare_channels, train

__all__ = ["Model", "load_model", "prepare_channels", "train"]
__version__ = "0.1.0"
