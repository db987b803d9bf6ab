"""Continuous sign language recognition with multi-scale local-temporal
similarity fusion, on a small numpy autodiff core."""

from .config import RunConfig, TrainConfig, load_config
from .synth import LabeledSample, SynthConfig
from .tensor import Tensor

__all__ = ["LabeledSample", "RunConfig", "SynthConfig", "Tensor", "TrainConfig", "load_config"]
__version__ = "0.1.0"
