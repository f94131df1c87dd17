"""The BokehOrNot U-shaped encoder-decoder.

Three encoder levels, a latent stage and three mirrored decoder levels, all
made of :class:`~bokehornot.blocks.DITB` blocks conditioned on one shared lens
embedding per forward pass. The network predicts a residual that is added
to the source image.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Sequence

import torch
import torch.nn as nn

from .blocks import DITB, Downsample, Upsample, default_heads
from .errors import ConfigError, DimensionError
from .lem import LensEmbedding
from .lens_meta import DEFAULT_BRANDS, MetaTuple, meta_values, num_meta_values

NUM_LEVELS = 3
SPATIAL_MULTIPLE = 2 ** NUM_LEVELS


@dataclass
class ModelConfig:
    base_channels: int = 48
    level_blocks: Sequence[int] = (2, 3, 3, 4)
    refinement_blocks: int = 2
    d_embed: int = 48
    image_channels: int = 3
    lem_hidden: int = 96
    ffn_expansion: float = 2.66
    head_granularity: int = 16
    brands: Sequence[str] = field(default_factory=lambda: DEFAULT_BRANDS)

    def __post_init__(self):
        self.level_blocks = tuple(int(b) for b in self.level_blocks)
        self.brands = tuple(self.brands)
        problems = self.problems()
        if problems:
            raise ConfigError("invalid model config: " + "; ".join(problems))

    def problems(self) -> list:
        out = []
        if self.base_channels < 4:
            out.append(f"base_channels must be >= 4, got {self.base_channels}")
        if len(self.level_blocks) != NUM_LEVELS + 1 or any(b < 1 for b in self.level_blocks):
            out.append(f"level_blocks needs {NUM_LEVELS + 1} positive counts, got {list(self.level_blocks)}")
        if self.refinement_blocks < 0:
            out.append("refinement_blocks must be >= 0")
        if self.d_embed <= 0 or self.d_embed % 2:
            out.append(f"d_embed must be a positive even integer, got {self.d_embed}")
        for level in range(NUM_LEVELS + 1):
            c = self.base_channels * 2 ** level
            if c % default_heads(c, self.head_granularity):
                out.append(f"level {level + 1} width {c} not divisible by its head count")
        if len(self.brands) < 2:
            out.append("brands needs at least two entries")
        return out

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        """Desk-scale configuration used by the tests and demos."""
        kw = dict(base_channels=16, level_blocks=(1, 1, 1, 1), refinement_blocks=0)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["level_blocks"] = list(self.level_blocks)
        d["brands"] = list(self.brands)
        return d


class BokehOrNot(nn.Module):

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        cfg = config or ModelConfig()
        self.config = cfg
        c = cfg.base_channels
        nb = cfg.level_blocks
        widths = [c * 2 ** i for i in range(NUM_LEVELS + 1)]

        def stack(width, n):
            return nn.ModuleList(
                DITB(width, cfg.d_embed, default_heads(width, cfg.head_granularity), cfg.ffn_expansion)
                for _ in range(n)
            )

        self.lem = LensEmbedding(cfg.d_embed, cfg.lem_hidden, num_meta_values(cfg.brands))
        self.input_projection = nn.Conv2d(cfg.image_channels, c, kernel_size=3, padding=1, bias=False)

        self.encoders = nn.ModuleList(stack(widths[i], nb[i]) for i in range(NUM_LEVELS))
        self.downs = nn.ModuleList(Downsample(widths[i]) for i in range(NUM_LEVELS))
        self.latent = stack(widths[NUM_LEVELS], nb[NUM_LEVELS])
        # decoder modules are indexed by level (0 = full resolution)
        self.ups = nn.ModuleList(Upsample(widths[i + 1]) for i in range(NUM_LEVELS))
        self.merges = nn.ModuleList(
            nn.Conv2d(2 * widths[i], widths[i], kernel_size=1, bias=False) for i in range(NUM_LEVELS)
        )
        self.decoders = nn.ModuleList(stack(widths[i], nb[i]) for i in range(NUM_LEVELS))
        self.refinement = stack(c, cfg.refinement_blocks)
        self.output_projection = nn.Conv2d(c, cfg.image_channels, kernel_size=3, padding=1, bias=False)

    def condition(self, meta_vals: torch.Tensor) -> torch.Tensor:
        return self.lem(meta_vals)

    def forward(self, source: torch.Tensor, meta_vals: torch.Tensor, clamp: bool = False) -> torch.Tensor:
        """Transform ``source`` (B, 3, H, W) given metadata scalars (B, k)."""
        if source.dim() != 4 or source.shape[1] != self.config.image_channels:
            raise DimensionError(f"expected source of shape (B, {self.config.image_channels}, H, W), "
                                 f"got {tuple(source.shape)}")
        h, w = source.shape[-2:]
        if h % SPATIAL_MULTIPLE or w % SPATIAL_MULTIPLE:
            raise DimensionError(f"height and width must be divisible by {SPATIAL_MULTIPLE}, got {h}x{w}")
        if meta_vals.dim() == 1:
            meta_vals = meta_vals.unsqueeze(0)
        v = self.lem(meta_vals)

        x = self.input_projection(source)
        skips = []
        for blocks, down in zip(self.encoders, self.downs):
            for blk in blocks:
                x = blk(x, v)
            skips.append(x)
            x = down(x)
        for blk in self.latent:
            x = blk(x, v)
        for level in reversed(range(NUM_LEVELS)):
            x = self.ups[level](x)
            x = self.merges[level](torch.cat([x, skips[level]], dim=1))
            for blk in self.decoders[level]:
                x = blk(x, v)
        for blk in self.refinement:
            x = blk(x, v)

        out = source + self.output_projection(x)
        if clamp:
            out = out.clamp(0.0, 1.0)
        return out


def meta_tensor(metas, brands=DEFAULT_BRANDS, dtype=None) -> torch.Tensor:
    """Stack metadata records into the (B, k) float tensor the model consumes."""
    if isinstance(metas, MetaTuple):
        metas = [metas]
    rows = [meta_values(m, brands) for m in metas]
    return torch.tensor(rows, dtype=dtype or torch.get_default_dtype())


def model_forward(source: torch.Tensor, meta, model: BokehOrNot, clamp: bool = False) -> torch.Tensor:
    """Convenience wrapper; ``source`` is (3, H, W) or (B, 3, H, W).

    ``meta`` is one MetaTuple shared by the batch or a sequence with one per image.
    """
    single = source.dim() == 3
    if single:
        source = source.unsqueeze(0)
    metas = [meta] * source.shape[0] if isinstance(meta, MetaTuple) else list(meta)
    if len(metas) != source.shape[0]:
        raise DimensionError(f"{len(metas)} metadata records for a batch of {source.shape[0]}")
    vals = meta_tensor(metas, model.config.brands, dtype=source.dtype)
    out = model(source, vals, clamp=clamp)
    return out[0] if single else out


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def parameter_breakdown(model: nn.Module) -> "OrderedDict[str, int]":
    """Parameter count per top-level submodule."""
    out = OrderedDict()
    for name, child in model.named_children():
        out[name] = sum(p.numel() for p in child.parameters())
    return out
