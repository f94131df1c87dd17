"""Dataset layout, paired cropping and the synthetic depth-of-field generator.

On-disk layout::

    root/
      meta.txt            id,source_lens,target_lens,disparity per line
      source/<id>.png     8-bit RGB
      target/<id>.png     8-bit RGB
      alpha/<id>.png      8-bit grayscale foreground matte

The synthetic generator writes the same layout. Each scene is a smooth
background plus feathered foreground shapes; the background is defocused
according to each lens while the foreground stays sharp, so source and
target agree wherever alpha is 1.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DatasetError, ValidationError
from .lens_meta import DEFAULT_BRANDS, LensSpec, MetaTuple, read_meta_file, write_meta_file

META_FILE = "meta.txt"
SUBDIRS = ("source", "target", "alpha")


def read_rgb(path) -> np.ndarray:
    """(3, H, W) float32 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr.transpose(2, 0, 1) / 255.0


def read_gray(path) -> np.ndarray:
    """(1, H, W) float32 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32)
    return arr[None] / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_rgb(path, img: np.ndarray) -> None:
    """Write a (3, H, W) unit-range image as an 8-bit PNG."""
    Image.fromarray(to_uint8(np.asarray(img).transpose(1, 2, 0)), mode="RGB").save(path, format="PNG")


def write_gray(path, img: np.ndarray) -> None:
    Image.fromarray(to_uint8(np.asarray(img).reshape(img.shape[-2:])), mode="L").save(path, format="PNG")


@dataclass
class TrainingPair:
    source: np.ndarray
    target: np.ndarray
    alpha: np.ndarray
    meta: MetaTuple

    def __post_init__(self):
        hw = self.source.shape[-2:]
        if self.target.shape[-2:] != hw or self.alpha.shape[-2:] != hw:
            raise ValidationError(
                f"pair {self.meta.id}: source {self.source.shape}, target {self.target.shape} "
                f"and alpha {self.alpha.shape} differ in spatial extent"
            )


@dataclass(frozen=True)
class PairRecord:
    """Lazily-decodable reference to one pair on disk."""

    meta: MetaTuple
    source_path: Path
    target_path: Path
    alpha_path: Path

    @property
    def id(self) -> str:
        return self.meta.id

    def load(self) -> TrainingPair:
        return TrainingPair(read_rgb(self.source_path), read_rgb(self.target_path),
                            read_gray(self.alpha_path), self.meta)


def load_dataset(root, registry: Sequence[str] = DEFAULT_BRANDS) -> list:
    """Read ``meta.txt`` under ``root`` and return one :class:`PairRecord` per line."""
    root = Path(root)
    meta_path = root / META_FILE
    if not meta_path.is_file():
        raise DatasetError(f"{root}: missing {META_FILE}")
    metas = read_meta_file(meta_path, registry)
    seen = set()
    records = []
    for m in metas:
        if m.id in seen:
            raise ValidationError(f"{meta_path}: duplicate record id {m.id}")
        seen.add(m.id)
        paths = [root / sub / f"{m.id}.png" for sub in SUBDIRS]
        for sub, p in zip(SUBDIRS, paths):
            if not p.is_file():
                raise DatasetError(f"record {m.id}: missing {sub} image {p}")
        records.append(PairRecord(m, *paths))
    n_images = len(list((root / "source").glob("*.png")))
    if n_images != len(records):
        raise ValidationError(
            f"{root}: {len(records)} metadata records but {n_images} source images"
        )
    return records


def paired_random_crop(pair: TrainingPair, size: int, rng: np.random.Generator) -> TrainingPair:
    """Cut the same ``size`` x ``size`` window from source, target and alpha."""
    h, w = pair.source.shape[-2:]
    if size > min(h, w) or size <= 0:
        raise ValidationError(f"crop size {size} does not fit a {h}x{w} pair")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    win = (Ellipsis, slice(top, top + size), slice(left, left + size))
    return TrainingPair(pair.source[win], pair.target[win], pair.alpha[win], pair.meta)


# -- synthetic generator ---------------------------------------------------

@dataclass
class SynthConfig:
    image_size: tuple = (128, 128)
    num_pairs: int = 8
    seed: int = 7
    max_radius: float = 8.0
    disparity_gain: float = 0.25
    f_numbers: tuple = (1.4, 1.8, 16.0)
    brands: tuple = DEFAULT_BRANDS
    focal_length_mm: float = 50.0
    disparities: tuple = (0, 1, 2, 3, 4)
    foreground_count_range: tuple = (1, 3)
    wavelength_range: tuple = (12.0, 48.0)
    num_waves: int = 6
    noise_std: float = 0.004
    feather_px: float = 2.5

    def __post_init__(self):
        self.image_size = tuple(int(s) for s in self.image_size)
        if self.num_pairs < 1:
            raise ValidationError(f"num_pairs must be positive, got {self.num_pairs}")
        if len(self.image_size) != 2 or min(self.image_size) < 16:
            raise ValidationError(f"image_size must be two extents >= 16, got {self.image_size}")
        if len(set(self.f_numbers)) < 2:
            raise ValidationError("need at least two distinct f-numbers")

    def blur_radius(self, f_number: float, disparity: float) -> float:
        """Defocus radius in pixels; proportional to aperture diameter."""
        d_ratio = min(self.f_numbers) / f_number  # (focal/f) / (focal/f_min)
        return self.max_radius * d_ratio * (1.0 + self.disparity_gain * disparity)

    def describe(self) -> str:
        lines = [f"{k} = {v}" for k, v in sorted(vars(self).items())]
        return "\n".join(lines) + "\n"


@dataclass
class Scene:
    background: np.ndarray  # (3, H, W)
    foreground: np.ndarray  # (3, H, W)
    alpha: np.ndarray       # (1, H, W)
    meta: MetaTuple | None = None
    extras: dict = field(default_factory=dict)


def disk_kernel(radius: float) -> np.ndarray:
    """Normalized anti-aliased disk (uniform circle of confusion)."""
    r = int(math.ceil(radius + 0.5))
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    k = np.clip(radius + 0.5 - np.hypot(x, y), 0.0, 1.0)
    return k / k.sum()


def defocus(img: np.ndarray, radius: float, brand: str) -> np.ndarray:
    """Blur every channel: Gaussian (sigma = radius/2) for Sony, disk for Canon.

    The two kernels share their second moment, so brands differ in bokeh
    shape rather than strength.
    """
    if radius < 0.5:
        return img.copy()
    if brand == "Canon":
        k = disk_kernel(radius)
        return np.stack([ndimage.convolve(c, k, mode="reflect") for c in img])
    return np.stack([ndimage.gaussian_filter(c, radius / 2.0, mode="reflect") for c in img])


def _smooth_field(rng, h, w, cfg: SynthConfig) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.empty((3, h, w))
    base = rng.uniform(0.3, 0.7, size=3)
    for c in range(3):
        acc = np.zeros((h, w))
        for _ in range(cfg.num_waves):
            lam = rng.uniform(*cfg.wavelength_range)
            theta = rng.uniform(0, math.pi)
            phase = rng.uniform(0, 2 * math.pi)
            k = 2 * math.pi / lam
            acc += rng.uniform(0.3, 1.0) * np.sin(k * (xx * math.cos(theta) + yy * math.sin(theta)) + phase)
        acc /= np.abs(acc).max() + 1e-12
        out[c] = base[c] + 0.25 * acc
    return out


def sample_scene(rng: np.random.Generator, cfg: SynthConfig) -> Scene:
    h, w = cfg.image_size
    background = _smooth_field(rng, h, w, cfg)
    background += rng.normal(0.0, cfg.noise_std, size=background.shape)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    lo, hi = cfg.foreground_count_range
    n_shapes = int(rng.integers(lo, hi + 1))
    keep = np.ones((h, w))
    for _ in range(n_shapes):
        cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
        a, b = rng.uniform(0.08, 0.22) * w, rng.uniform(0.08, 0.22) * h
        rot = rng.uniform(0, math.pi)
        dx, dy = xx - cx, yy - cy
        u = dx * math.cos(rot) + dy * math.sin(rot)
        v = -dx * math.sin(rot) + dy * math.cos(rot)
        rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        dist = (1.0 - rho) * min(a, b)  # approx. signed distance to the rim
        shape_alpha = np.clip(0.5 + dist / cfg.feather_px, 0.0, 1.0)
        keep *= 1.0 - shape_alpha
    # snap to the 8-bit grid so written mattes reproduce the compositing weights
    alpha = np.round((1.0 - keep) * 255.0) / 255.0

    grad = rng.uniform(-0.3, 0.3, size=(3, 2))
    tone = rng.uniform(0.25, 0.75, size=3)
    foreground = np.stack([tone[c] + grad[c, 0] * (yy / h - 0.5) + grad[c, 1] * (xx / w - 0.5)
                           for c in range(3)])
    return Scene(np.clip(background, 0, 1), np.clip(foreground, 0, 1), alpha[None])


def render_view(scene: Scene, lens: LensSpec, disparity: float, cfg: SynthConfig) -> np.ndarray:
    """Composite the scene as seen through ``lens``; quantized to 8 bits."""
    bg = defocus(scene.background, cfg.blur_radius(lens.f_number, disparity), lens.brand)
    img = scene.alpha * scene.foreground + (1.0 - scene.alpha) * bg
    return to_uint8(img).astype(np.float32) / 255.0


def _lens(brand, f_number, cfg):
    spec = LensSpec(brand, cfg.focal_length_mm, float(f_number))
    return LensSpec(brand, cfg.focal_length_mm, float(f_number), raw_name=spec.name)


def _sample_lenses(rng, index, cfg: SynthConfig):
    # alternate sharp->blur and blur->sharp so small sets cover both directions
    f_pair = sorted(rng.choice(np.asarray(cfg.f_numbers, dtype=float), size=2, replace=False))
    wide, narrow = float(f_pair[0]), float(f_pair[1])
    src_brand = cfg.brands[int(rng.integers(len(cfg.brands)))]
    tgt_brand = cfg.brands[int(rng.integers(len(cfg.brands)))]
    if index % 2 == 0:
        return _lens(src_brand, narrow, cfg), _lens(tgt_brand, wide, cfg)
    return _lens(src_brand, wide, cfg), _lens(tgt_brand, narrow, cfg)


def synthesize_pair(rng: np.random.Generator, index: int, cfg: SynthConfig, record_id: str | None = None) -> TrainingPair:
    scene = sample_scene(rng, cfg)
    src, tgt = _sample_lenses(rng, index, cfg)
    disparity = float(cfg.disparities[int(rng.integers(len(cfg.disparities)))])
    meta = MetaTuple(record_id or f"{index:05d}", src, tgt, disparity)
    return TrainingPair(render_view(scene, src, disparity, cfg), render_view(scene, tgt, disparity, cfg),
                        scene.alpha.astype(np.float32), meta)


def generate_synthetic(config: SynthConfig, out_root) -> list:
    """Write ``config.num_pairs`` synthetic pairs in the dataset layout.

    Returns the metadata records. Output is a pure function of ``config``.
    """
    out_root = Path(out_root)
    rng = np.random.default_rng(config.seed)
    try:
        for sub in SUBDIRS:
            (out_root / sub).mkdir(parents=True, exist_ok=True)
        metas = []
        for i in range(config.num_pairs):
            pair = synthesize_pair(rng, i, config)
            write_rgb(out_root / "source" / f"{pair.meta.id}.png", pair.source)
            write_rgb(out_root / "target" / f"{pair.meta.id}.png", pair.target)
            write_gray(out_root / "alpha" / f"{pair.meta.id}.png", pair.alpha)
            metas.append(pair.meta)
        write_meta_file(out_root / META_FILE, metas)
        (out_root / "synth_config.txt").write_text(config.describe(), encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"writing synthetic dataset to {os.fspath(out_root)} failed: {exc}") from exc
    return metas
