# coding: utf-8

# # A synthetic depth-of-field dataset
#
# Real paired bokeh data is not redistributable, so the package can render a
# small stand-in: a textured background blurred according to the lens, with a
# sharp elliptical foreground composited on top through its alpha matte.

import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from bokehornot import reports
from bokehornot.data import SynthConfig, generate_synthetic, load_dataset
from bokehornot.engine import evaluate

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="bokeh-synth-"))
cfg = SynthConfig(image_size=(128, 128), num_pairs=8, seed=7)
print(cfg.describe())

metas = generate_synthetic(cfg, out)
print(f"\nwrote {len(metas)} pairs to {out}")

# ## What the blur looks like
#
# The background blur radius grows with wider apertures and with disparity.

for f in (16.0, 1.8, 1.4):
    radii = [cfg.blur_radius(f, d) for d in range(5)]
    print(f"f/{f:<5} radius by disparity 0..4: " + " ".join(f"{r:5.2f}" for r in radii))

# ## Dataset statistics
#
# The same report the `stats` command prints: lens-pair grid, disparity
# shares and how far each source already is from its target.

records = load_dataset(out)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    baseline = evaluate(records, None)
print()
print(reports.format_stats([r.meta for r in records], baseline))

# ## The foreground is preserved exactly
#
# Where alpha is 1 the source and target agree, which is why the second
# training stage can ignore those pixels.

pair = records[0].load()
fg = pair.alpha[0] == 1.0
print("max |source - target| under the foreground:", float(np.abs(pair.source - pair.target)[:, fg].max()))
