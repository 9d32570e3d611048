"""cavnet: robustness certification and attack toolkit for small ReLU nets."""

from .network import (
    Conv2d,
    CrossEntropy,
    Dense,
    Flatten,
    LogitMargin,
    Network,
    Relu,
    SingleLogit,
    classify,
    forward,
    grad_input,
)
from .serial import deserialize, load_model, save_model, serialize
from .tensors import Tensor

__all__ = [
    "Tensor",
    "Dense",
    "Conv2d",
    "Relu",
    "Flatten",
    "Network",
    "CrossEntropy",
    "LogitMargin",
    "SingleLogit",
    "forward",
    "classify",
    "grad_input",
    "serialize",
    "deserialize",
    "save_model",
    "load_model",
]

__version__ = "0.1.0"
