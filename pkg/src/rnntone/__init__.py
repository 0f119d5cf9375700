"""RNN encoder-classifier tone model."""
from rnntone.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND"]
