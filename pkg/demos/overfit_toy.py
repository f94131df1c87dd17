# coding: utf-8

# # Overfitting a toy model
#
# A small network trained on eight synthetic pairs should quickly beat the
# identity baseline. The default here is a short run; pass iteration counts
# (stage one, stage two) on the command line for a longer one, e.g.
# `python3 demos/overfit_toy.py 2000 2000`.

import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from bokehornot.data import SynthConfig, generate_synthetic, load_dataset, synthesize_pair
from bokehornot.engine import build_model, desk_stages, evaluate, fixed_evaluation_mode, infer, train
from bokehornot.network import ModelConfig, count_parameters

iterations = tuple(int(x) for x in sys.argv[1:3]) if len(sys.argv) >= 3 else (300, 300)
root = Path(tempfile.mkdtemp(prefix="bokeh-overfit-"))
generate_synthetic(SynthConfig(seed=7), root)
pairs = [r.load() for r in load_dataset(root)]

model = build_model(ModelConfig.toy(), seed=7)
print(f"toy model: {count_parameters(model):,} parameters")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    before = evaluate(pairs, None).overall

# ## Training
#
# Stage one uses plain L1 on small crops; stage two switches to the
# alpha-masked loss on larger crops, with fresh optimizer moments.

t0 = time.time()


def progress(state, loss):
    if state.iteration % 100 == 0:
        print(f"  {state.stage.name:22s} it {state.iteration:5d}  loss {loss:.5f}  ({time.time() - t0:.0f}s)")


with fixed_evaluation_mode():
    train(pairs, model, desk_stages(iterations), seed=7, on_step=progress)

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    after = evaluate(pairs, model).overall
print(f"\nPSNR source vs target: {before.psnr_db:.2f} dB, output vs target: {after.psnr_db:.2f} dB")
print(f"SSIM source vs target: {before.ssim:.4f}, output vs target: {after.ssim:.4f}")

# ## Tiled inference
#
# Large images can be processed in overlapping tiles. Channel attention pools
# statistics over the whole input, so a tile sees different statistics than
# the full image and the outputs can drift apart by ten or more gray levels.

big = synthesize_pair(np.random.default_rng(512), 0, SynthConfig(image_size=(256, 256)))
whole = infer(big.source, big.meta, model)
tiled = infer(big.source, big.meta, model, tile=128, overlap=32)
print(f"max |tiled - whole| on 256x256: {abs(whole - tiled).max() * 255:.2f}/255")
