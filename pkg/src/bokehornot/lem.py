"""Lens Embedding Module (LEM).

Source lens value, target lens value and disparity are each expanded with a
sinusoidal embedding, concatenated and compressed by a two-layer perceptron
into a single conditioning vector shared by every transformer block.
"""

import math

import torch
import torch.nn as nn

from .errors import ConfigError
from .lens_meta import LensCode


def scalar_to_lens_value(code: LensCode) -> float:
    """Signed aperture for a two-brand registry, e.g. Canon f/1.4 -> -1.4."""
    if len(code.brand_code) != 1:
        raise ConfigError("scalar lens values are only defined for two-brand registries")
    return code.brand_code[0] * code.aperture


def sinusoidal_embed(v, dim: int, base: float = 10000.0) -> torch.Tensor:
    """Interleaved sin/cos embedding of scalar(s) ``v``.

    ``out[..., 2i] = sin(v / base**(2i/dim))`` and ``out[..., 2i+1]`` the
    matching cosine. Accepts a python float or a tensor of any shape; the
    embedding axis is appended last.
    """
    if dim <= 0 or dim % 2:
        raise ConfigError(f"embedding dim must be a positive even integer, got {dim}")
    if not torch.is_tensor(v):
        v = torch.tensor(v, dtype=torch.get_default_dtype())
    if not v.is_floating_point():
        v = v.to(torch.get_default_dtype())
    exponent = torch.arange(0, dim, 2, dtype=v.dtype, device=v.device) / dim
    freq = torch.exp(-math.log(base) * exponent)
    angle = v.unsqueeze(-1) * freq
    out = torch.stack([torch.sin(angle), torch.cos(angle)], dim=-1)
    return out.flatten(-2)


def init_linear(layer: nn.Linear) -> nn.Linear:
    bound = 1.0 / math.sqrt(layer.in_features)
    nn.init.uniform_(layer.weight, -bound, bound)
    if layer.bias is not None:
        nn.init.zeros_(layer.bias)
    return layer


class LensEmbedding(nn.Module):
    """Maps ``(B, num_values)`` metadata scalars to a ``(B, d_embed)`` vector."""

    def __init__(self, d_embed=48, hidden=96, num_values=3):
        super().__init__()
        if d_embed % 2:
            raise ConfigError(f"d_embed must be even, got {d_embed}")
        self.d_embed = d_embed
        self.num_values = num_values
        self.fc1 = init_linear(nn.Linear(num_values * d_embed, hidden))
        self.act = nn.GELU()
        self.fc2 = init_linear(nn.Linear(hidden, d_embed))

    def embed(self, values: torch.Tensor) -> torch.Tensor:
        if values.shape[-1] != self.num_values:
            raise ConfigError(f"expected {self.num_values} metadata values, got {values.shape[-1]}")
        emb = sinusoidal_embed(values, self.d_embed)  # (B, num_values, d_embed)
        return emb.flatten(-2)

    def forward(self, values: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(self.embed(values))))


def lem_forward(src, tgt, disparity, lem: LensEmbedding) -> torch.Tensor:
    """Conditioning vector for one (source value, target value, disparity) triple."""
    dtype = lem.fc1.weight.dtype
    values = torch.tensor([[float(src), float(tgt), float(disparity)]], dtype=dtype)
    return lem(values)[0]
