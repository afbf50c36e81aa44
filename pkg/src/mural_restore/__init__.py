"""Mask-aware mural restoration on a from-scratch numpy tensor and autodiff core."""
from .model import ModelConfig, RestorationModel, build, composite, forward
from .tensor import Parameter, Tensor

__version__ = "0.1.0"
__all__ = ["ModelConfig", "RestorationModel", "Parameter", "Tensor", "build", "composite",
           "forward", "__version__"]
