"""Transformer building blocks: MDTA, GDFN, the dual-input block and resamplers.

MDTA and GDFN follow the Restormer design. The dual-input transformer block
(DITB) inserts a metadata-driven per-channel modulation between them::

    t = x + MDTA(norm(x))
    t = t * (1 + scale) + shift
    y = t + GDFN(norm(t))
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from .errors import ConfigError, DimensionError
from .lem import init_linear

EPS = 1e-6


def default_heads(channels: int, granularity: int = 16) -> int:
    return max(1, math.ceil(channels / granularity))


def _check_channels(x, channels, who):
    if x.dim() != 4:
        raise DimensionError(f"{who}: expected a (B, C, H, W) tensor, got shape {tuple(x.shape)}")
    if x.shape[1] != channels:
        raise DimensionError(f"{who}: expected {channels} channels, got {x.shape[1]}")


class ChannelLayerNorm(nn.Module):
    """Layer norm over the channel axis at every pixel, with gain and bias."""

    def __init__(self, channels):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        mu = x.mean(1, keepdim=True)
        var = x.var(1, keepdim=True, unbiased=False)
        x = (x - mu) / torch.sqrt(var + EPS)
        return x * self.weight[:, None, None] + self.bias[:, None, None]


class MDTA(nn.Module):
    """Multi-Dconv head transposed attention (attention across channels)."""

    def __init__(self, channels, num_heads=None):
        super().__init__()
        num_heads = num_heads or default_heads(channels)
        if channels % num_heads:
            raise ConfigError(f"{channels} channels are not divisible into {num_heads} heads")
        self.channels = channels
        self.num_heads = num_heads
        self.temperature = nn.Parameter(torch.ones(num_heads, 1, 1))
        self.qkv = nn.Conv2d(channels, channels * 3, kernel_size=1, bias=False)
        self.qkv_dwconv = nn.Conv2d(channels * 3, channels * 3, kernel_size=3, padding=1,
                                    groups=channels * 3, bias=False)
        self.project_out = nn.Conv2d(channels, channels, kernel_size=1, bias=False)

    def attention_map(self, x):
        """Softmax-normalized ``(B, heads, C/heads, C/heads)`` channel attention, plus values."""
        _check_channels(x, self.channels, "MDTA")
        q, k, v = self.qkv_dwconv(self.qkv(x)).chunk(3, dim=1)
        q = rearrange(q, "b (head c) h w -> b head c (h w)", head=self.num_heads)
        k = rearrange(k, "b (head c) h w -> b head c (h w)", head=self.num_heads)
        v = rearrange(v, "b (head c) h w -> b head c (h w)", head=self.num_heads)
        q = F.normalize(q, dim=-1, eps=EPS)
        k = F.normalize(k, dim=-1, eps=EPS)
        attn = (q @ k.transpose(-2, -1)) * self.temperature
        return attn.softmax(dim=-1), v

    def forward(self, x):
        attn, v = self.attention_map(x)
        out = rearrange(attn @ v, "b head c (h w) -> b (head c) h w", h=x.shape[-2], w=x.shape[-1])
        return self.project_out(out)


class GDFN(nn.Module):
    """Gated-Dconv feed-forward network."""

    def __init__(self, channels, expansion=2.66):
        super().__init__()
        hidden = int(channels * expansion)
        self.channels = channels
        self.hidden = hidden
        self.project_in = nn.Conv2d(channels, hidden * 2, kernel_size=1, bias=False)
        self.dwconv = nn.Conv2d(hidden * 2, hidden * 2, kernel_size=3, padding=1,
                                groups=hidden * 2, bias=False)
        self.project_out = nn.Conv2d(hidden, channels, kernel_size=1, bias=False)

    def forward(self, x):
        _check_channels(x, self.channels, "GDFN")
        x1, x2 = self.dwconv(self.project_in(x)).chunk(2, dim=1)
        return self.project_out(F.gelu(x1) * x2)


class Conditioner(nn.Module):
    """Two-layer perceptron turning the lens embedding into (scale, shift)."""

    def __init__(self, d_embed, channels, hidden=None):
        super().__init__()
        hidden = hidden or 2 * channels
        self.channels = channels
        self.fc1 = init_linear(nn.Linear(d_embed, hidden))
        self.act = nn.GELU()
        self.fc2 = init_linear(nn.Linear(hidden, 2 * channels))

    def forward(self, v):
        scale, shift = self.fc2(self.act(self.fc1(v))).chunk(2, dim=-1)
        return scale, shift


def modulate(x, scale, shift):
    """``x * (1 + scale) + shift`` with per-channel broadcast over H and W."""
    if scale.dim() == 1:
        scale, shift = scale.unsqueeze(0), shift.unsqueeze(0)
    return x * (1 + scale[:, :, None, None]) + shift[:, :, None, None]


class DITB(nn.Module):
    """Dual-input transformer block: image features plus a conditioning vector."""

    def __init__(self, channels, d_embed=48, num_heads=None, expansion=2.66):
        super().__init__()
        self.channels = channels
        self.d_embed = d_embed
        self.norm1 = ChannelLayerNorm(channels)
        self.attn = MDTA(channels, num_heads)
        self.cond = Conditioner(d_embed, channels)
        self.norm2 = ChannelLayerNorm(channels)
        self.ffn = GDFN(channels, expansion)

    def forward(self, x, v):
        _check_channels(x, self.channels, "DITB")
        if v.shape[-1] != self.d_embed:
            raise DimensionError(f"DITB: conditioning vector has length {v.shape[-1]}, expected {self.d_embed}")
        x = x + self.attn(self.norm1(x))
        scale, shift = self.cond(v)
        x = modulate(x, scale, shift)
        return x + self.ffn(self.norm2(x))


class Downsample(nn.Module):
    """Space-to-depth then 1x1 conv: (C, H, W) -> (2C, H/2, W/2)."""

    def __init__(self, channels):
        super().__init__()
        self.channels = channels
        self.proj = nn.Conv2d(channels * 4, channels * 2, kernel_size=1, bias=False)

    def forward(self, x):
        _check_channels(x, self.channels, "Downsample")
        h, w = x.shape[-2:]
        if h % 2 or w % 2:
            raise DimensionError(f"Downsample needs even spatial extent, got {h}x{w}")
        return self.proj(F.pixel_unshuffle(x, 2))


class Upsample(nn.Module):
    """1x1 conv then depth-to-space: (C, H, W) -> (C/2, 2H, 2W)."""

    def __init__(self, channels):
        super().__init__()
        if channels % 2:
            raise ConfigError(f"Upsample needs an even channel count, got {channels}")
        self.channels = channels
        self.proj = nn.Conv2d(channels, channels * 2, kernel_size=1, bias=False)

    def forward(self, x):
        _check_channels(x, self.channels, "Upsample")
        return F.pixel_shuffle(self.proj(x), 2)
