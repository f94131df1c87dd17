"""Two-stage training, evaluation, checkpointing and (tiled) inference."""

from __future__ import annotations

import contextlib
import logging
import math
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import checkpoint
from .data import PairRecord, TrainingPair, paired_random_crop
from .errors import ConfigError, DimensionError, TrainingError, ValidationError
from .lens_meta import MetaTuple, encode_lens
from .loss_metrics import MetricReport, alpha_masked_loss, l1_loss, score_image
from .network import SPATIAL_MULTIPLE, BokehOrNot, ModelConfig, meta_tensor

log = logging.getLogger(__name__)

STAGE_NAMES = ("precise_detecting", "global_transformation")
LOSSES = {"l1": lambda pred, tgt, alpha: l1_loss(pred, tgt),
          "alpha_masked": alpha_masked_loss}
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class StageConfig:
    name: str
    crop: int
    batch: int
    lr: float
    loss: str
    iterations: int

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(f"stage {self.name!r}: " + "; ".join(problems))

    def problems(self) -> list:
        out = []
        if self.name not in STAGE_NAMES:
            out.append(f"name must be one of {STAGE_NAMES}")
        if self.loss not in LOSSES:
            out.append(f"loss must be one of {sorted(LOSSES)}")
        if self.crop <= 0 or self.crop % SPATIAL_MULTIPLE:
            out.append(f"crop must be a positive multiple of {SPATIAL_MULTIPLE}, got {self.crop}")
        if self.batch <= 0:
            out.append(f"batch must be positive, got {self.batch}")
        if not self.lr > 0:
            out.append(f"lr must be positive, got {self.lr}")
        if self.iterations <= 0:
            out.append(f"iterations must be positive, got {self.iterations}")
        return out


def full_stages(iterations=(2000, 2000)) -> list:
    """Full-resolution schedule: L1 on 256 crops, then alpha-masked L1 on 384 crops."""
    return [
        StageConfig("precise_detecting", crop=256, batch=4, lr=1e-4, loss="l1", iterations=iterations[0]),
        StageConfig("global_transformation", crop=384, batch=2, lr=5e-5, loss="alpha_masked",
                    iterations=iterations[1]),
    ]


def desk_stages(iterations=(2000, 2000), crops=(64, 96), lrs=(1e-3, 5e-4)) -> list:
    """The same two-stage schedule scaled to 128x128 synthetic images."""
    return [
        StageConfig("precise_detecting", crop=crops[0], batch=4, lr=lrs[0], loss="l1", iterations=iterations[0]),
        StageConfig("global_transformation", crop=crops[1], batch=2, lr=lrs[1], loss="alpha_masked",
                    iterations=iterations[1]),
    ]


@contextlib.contextmanager
def fixed_evaluation_mode(threads: int | None = 1):
    """Deterministic kernels (and optionally a fixed thread count) for reproducible runs."""
    prev_det = torch.are_deterministic_algorithms_enabled()
    prev_threads = torch.get_num_threads()
    torch.use_deterministic_algorithms(True)
    if threads:
        torch.set_num_threads(threads)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(prev_det)
        torch.set_num_threads(prev_threads)


def build_model(config: ModelConfig, seed: int = 0, dtype=torch.float32) -> BokehOrNot:
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        model = BokehOrNot(config).to(dtype)
    finally:
        torch.random.set_rng_state(gen_state)
    return model


def make_optimizer(model, lr):
    return torch.optim.Adam(model.parameters(), lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS, foreach=False)


# -- data feeding ----------------------------------------------------------

class PairCache:
    """Index-addressable pairs; records are decoded on first use and kept."""

    def __init__(self, dataset: Sequence):
        if len(dataset) == 0:
            raise ValidationError("dataset is empty")
        self.items = list(dataset)
        self._cache = {}

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i) -> TrainingPair:
        item = self.items[i]
        if isinstance(item, TrainingPair):
            return item
        if i not in self._cache:
            self._cache[i] = item.load()
        return self._cache[i]


@dataclass
class Sampler:
    """Shuffled epoch order drawn from the shared generator; resumable."""

    order: list = field(default_factory=list)
    cursor: int = 0

    def next_indices(self, rng, n, k):
        out = []
        while len(out) < k:
            if self.cursor >= len(self.order):
                self.order = [int(i) for i in rng.permutation(n)]
                self.cursor = 0
            out.append(self.order[self.cursor])
            self.cursor += 1
        return out


def make_batch(pairs, indices, crop, rng, brands, dtype):
    crops = [paired_random_crop(pairs[i], crop, rng) for i in indices]
    src = torch.from_numpy(np.stack([c.source for c in crops])).to(dtype)
    tgt = torch.from_numpy(np.stack([c.target for c in crops])).to(dtype)
    alpha = torch.from_numpy(np.stack([c.alpha for c in crops])).to(dtype)
    vals = meta_tensor([c.meta for c in crops], brands, dtype=dtype)
    return src, tgt, alpha, vals, [c.meta.id for c in crops]


# -- training --------------------------------------------------------------

@dataclass
class TrainState:
    model: BokehOrNot
    stages: list
    optimizer: torch.optim.Optimizer | None = None
    stage_index: int = 0
    iteration: int = 0  # completed iterations within the current stage
    global_step: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    sampler: Sampler = field(default_factory=Sampler)
    losses: list = field(default_factory=list)
    best_psnr: float = -math.inf

    @property
    def stage(self) -> StageConfig:
        return self.stages[min(self.stage_index, len(self.stages) - 1)]

    @property
    def finished(self) -> bool:
        return self.stage_index >= len(self.stages)

    def to_archive(self):
        header = {
            "model_config": self.model.config.to_dict(),
            "stages": [asdict(s) for s in self.stages],
            "stage_index": self.stage_index,
            "stage": self.stage.name,
            "iteration": self.iteration,
            "global_step": self.global_step,
            "rng": self.rng.bit_generator.state,
            "sampler": {"order": self.sampler.order, "cursor": self.sampler.cursor},
            "best_psnr": None if not math.isfinite(self.best_psnr) else self.best_psnr,
            "optimizer_steps": {},
        }
        arrays = OrderedDict()
        for name, p in self.model.named_parameters():
            arrays[f"param/{name}"] = p.detach().cpu().numpy()
        if self.optimizer is not None:
            names = {id(p): n for n, p in self.model.named_parameters()}
            for p, st in self.optimizer.state.items():
                n = names[id(p)]
                arrays[f"optim/{n}/exp_avg"] = st["exp_avg"].detach().cpu().numpy()
                arrays[f"optim/{n}/exp_avg_sq"] = st["exp_avg_sq"].detach().cpu().numpy()
                header["optimizer_steps"][n] = float(st["step"])
        return header, arrays

    def save(self, path):
        header, arrays = self.to_archive()
        checkpoint.save(path, header, arrays)


def load_model(path, dtype=torch.float32) -> BokehOrNot:
    header, arrays = checkpoint.load(path)
    return _model_from_archive(header, arrays, dtype)


def _model_from_archive(header, arrays, dtype):
    cfg = ModelConfig(**header["model_config"])
    model = BokehOrNot(cfg).to(dtype)
    params = dict(model.named_parameters())
    missing = [n for n in params if f"param/{n}" not in arrays]
    if missing:
        raise checkpoint.CheckpointError(f"checkpoint lacks parameters: {missing[:5]}")
    with torch.no_grad():
        for n, p in params.items():
            p.copy_(torch.from_numpy(arrays[f"param/{n}"].copy()))
    return model


def load_train_state(path) -> TrainState:
    header, arrays = checkpoint.load(path)
    dtype = torch.float64 if any(a.dtype == np.float64 for k, a in arrays.items() if k.startswith("param/")) \
        else torch.float32
    model = _model_from_archive(header, arrays, dtype)
    stages = [StageConfig(**s) for s in header["stages"]]
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng"]
    state = TrainState(model, stages, stage_index=header["stage_index"], iteration=header["iteration"],
                       global_step=header["global_step"],
                       rng=rng, sampler=Sampler(list(header["sampler"]["order"]), header["sampler"]["cursor"]),
                       best_psnr=header["best_psnr"] if header["best_psnr"] is not None else -math.inf)
    if header["optimizer_steps"] and not state.finished:
        opt = make_optimizer(model, state.stage.lr)
        for n, p in model.named_parameters():
            if n in header["optimizer_steps"]:
                opt.state[p] = {
                    "step": torch.tensor(header["optimizer_steps"][n], dtype=torch.float32),
                    "exp_avg": torch.from_numpy(arrays[f"optim/{n}/exp_avg"].copy()),
                    "exp_avg_sq": torch.from_numpy(arrays[f"optim/{n}/exp_avg_sq"].copy()),
                }
        state.optimizer = opt
    return state


class RunSink:
    """Writes the training log and checkpoints into ``out_dir``."""

    def __init__(self, out_dir, checkpoint_every=250):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.checkpoint_every = checkpoint_every
        self.log_path = self.out_dir / "train.log"

    def record(self, step, stage, loss, lr):
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(f"iteration={step} stage={stage} loss={loss:.8g} lr={lr:g} time={time.time():.3f}\n")

    def checkpoint(self, state: TrainState, name: str):
        path = self.out_dir / name
        try:
            state.save(path)
        except OSError as exc:
            raise TrainingError(f"checkpoint write to {path} failed: {exc}") from exc
        return path


def train(dataset, model: BokehOrNot | None = None, stages: Sequence[StageConfig] | None = None,
          sink: RunSink | None = None, seed: int = 0, val_dataset=None, val_every: int = 250,
          resume: TrainState | None = None, max_steps: int | None = None,
          on_step: Callable | None = None) -> TrainState:
    """Run the stage schedule and return the final :class:`TrainState`.

    Each stage draws shuffled minibatches of paired random crops and
    optimizes its own loss with Adam; moments are reset at stage
    boundaries. ``max_steps`` stops early (for resumption tests);
    ``on_step(state, loss)`` is called after every update.
    """
    pairs = PairCache(dataset)
    if resume is not None:
        state = resume
    else:
        if model is None or not stages:
            raise ValidationError("train needs a model and a non-empty stage list")
        state = TrainState(model, list(stages), rng=np.random.default_rng(seed))
    model = state.model
    brands = model.config.brands
    dtype = next(model.parameters()).dtype
    for i in range(len(pairs)):
        h, w = pairs[i].source.shape[-2:]
        too_big = [s.crop for s in state.stages if s.crop > min(h, w)]
        if too_big:
            raise ValidationError(f"crop {too_big[0]} exceeds pair {pairs[i].meta.id} of size {h}x{w}")
    val_pairs = PairCache(val_dataset) if val_dataset else None

    steps = 0
    model.train()
    while not state.finished:
        stage = state.stage
        if state.optimizer is None:
            state.optimizer = make_optimizer(model, stage.lr)
        loss_fn = LOSSES[stage.loss]
        while state.iteration < stage.iterations:
            if max_steps is not None and steps >= max_steps:
                return state
            idx = state.sampler.next_indices(state.rng, len(pairs), stage.batch)
            src, tgt, alpha, vals, ids = make_batch(pairs, idx, stage.crop, state.rng, brands, dtype)
            pred = model(src, vals)
            loss = loss_fn(pred, tgt, alpha)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at {stage.name} iteration {state.iteration} "
                                    f"(batch ids {ids})")
            state.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            state.optimizer.step()
            state.iteration += 1
            steps += 1
            state.global_step += 1
            state.losses.append(value)
            if on_step is not None:
                on_step(state, value)
            if sink is not None:
                sink.record(state.global_step, stage.name, value, stage.lr)
            if val_pairs is not None and state.iteration % val_every == 0:
                report = evaluate(val_pairs.items, model).overall
                log.info("%s it %d: val psnr %.3f ssim %.4f", stage.name, state.iteration,
                         report.psnr_db, report.ssim)
                model.train()
                if sink is not None and report.psnr_db > state.best_psnr:
                    state.best_psnr = report.psnr_db
                    sink.checkpoint(state, "best.ckpt")
            if sink is not None and sink.checkpoint_every and state.iteration % sink.checkpoint_every == 0:
                sink.checkpoint(state, "last.ckpt")
        state.stage_index += 1
        state.iteration = 0
        state.optimizer = None
    if sink is not None:
        sink.checkpoint(state, "final.ckpt")
    model.eval()
    return state


# -- evaluation and inference ----------------------------------------------

def _ramp(n, overlap):
    i = np.arange(n)
    return np.minimum(np.minimum(i + 1, n - i) / (overlap + 1), 1.0)


def _tile_starts(n, tile, overlap):
    if n <= tile:
        return [0]
    starts = list(range(0, n - tile + 1, tile - overlap))
    if starts[-1] + tile < n:
        starts.append(n - tile)
    return starts


def validate_meta(meta: MetaTuple, brands) -> None:
    for lens in (meta.source, meta.target):
        encode_lens(lens, brands)


@torch.no_grad()
def infer(image, meta: MetaTuple, model: BokehOrNot, tile: int | None = None, overlap: int = 64) -> np.ndarray:
    """Transform one (3, H, W) image; returns float32 in [0, 1].

    With ``tile`` set, the image is processed as overlapping ``tile``-sized
    windows blended with linear ramps over the overlap. Arbitrary sizes are
    reflect-padded to a multiple of 8 and cropped back.
    """
    validate_meta(meta, model.config.brands)
    if tile is not None and (tile % SPATIAL_MULTIPLE or not 0 <= overlap < tile):
        raise ValidationError(f"tile must be a multiple of {SPATIAL_MULTIPLE} larger than overlap {overlap}")
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    img = torch.as_tensor(np.asarray(image), dtype=dtype)
    if img.dim() != 3 or img.shape[0] != model.config.image_channels:
        raise DimensionError(f"expected a ({model.config.image_channels}, H, W) image, got {tuple(img.shape)}")
    h, w = img.shape[-2:]
    ph, pw = (-h) % SPATIAL_MULTIPLE, (-w) % SPATIAL_MULTIPLE
    x = img.unsqueeze(0)
    if ph or pw:
        x = torch.nn.functional.pad(x, (0, pw, 0, ph), mode="reflect")
    vals = meta_tensor([meta], model.config.brands, dtype=dtype)

    H, W = x.shape[-2:]
    if tile is None or (H <= tile and W <= tile):
        out = model(x, vals, clamp=True)
    else:
        acc = torch.zeros_like(x)
        wsum = torch.zeros((1, 1, H, W), dtype=dtype)
        for top in _tile_starts(H, tile, overlap):
            for left in _tile_starts(W, tile, overlap):
                patch = x[..., top:top + tile, left:left + tile]
                pred = model(patch, vals, clamp=True)
                wy = _ramp(patch.shape[-2], overlap)
                wx = _ramp(patch.shape[-1], overlap)
                wt = torch.as_tensor(np.outer(wy, wx), dtype=dtype)[None, None]
                acc[..., top:top + tile, left:left + tile] += pred * wt
                wsum[..., top:top + tile, left:left + tile] += wt
        out = acc / wsum
    if was_training:
        model.train()
    return out[0, :, :h, :w].cpu().numpy().astype(np.float32)


@dataclass
class EvalResult:
    scores: list
    overall: MetricReport
    groups: "OrderedDict[tuple, MetricReport]"
    labels: list


def _lens_sort_key(label_spec):
    spec = label_spec
    return (spec.brand, spec.f_number)


def evaluate(dataset, model: BokehOrNot | None, tile: int | None = None, overlap: int = 64) -> EvalResult:
    """Score every pair; ``model=None`` scores the untouched source (baseline)."""
    pairs = PairCache(dataset)
    scores = []
    specs = {}
    for i in range(len(pairs)):
        p = pairs[i]
        pred = p.source if model is None else infer(p.source, p.meta, model, tile=tile, overlap=overlap)
        scores.append(score_image(p.meta.id, p.meta.source.short_label, p.meta.target.short_label, pred, p.target))
        specs[p.meta.source.short_label] = p.meta.source
        specs[p.meta.target.short_label] = p.meta.target
    labels = [lab for lab, _ in sorted(specs.items(), key=lambda kv: _lens_sort_key(kv[1]))]
    groups = OrderedDict()
    for s_lab in labels:
        for t_lab in labels:
            members = [s for s in scores if s.source == s_lab and s.target == t_lab]
            if members:
                groups[(s_lab, t_lab)] = MetricReport.aggregate(members)
    return EvalResult(scores, MetricReport.aggregate(scores), groups, labels)
