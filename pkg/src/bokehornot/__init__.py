"""Lens-conditioned bokeh transformation with a Restormer-style U-net."""

from .engine import evaluate, infer, load_model, train
from .lens_meta import LensSpec, MetaTuple, parse_lens_name
from .network import BokehOrNot, ModelConfig

__all__ = ["BokehOrNot", "LensSpec", "MetaTuple", "ModelConfig", "evaluate", "infer",
           "load_model", "parse_lens_name", "train"]
__version__ = "0.1.0"
