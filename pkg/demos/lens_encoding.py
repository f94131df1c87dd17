# coding: utf-8

# # Lens codes and the lens embedding
#
# Every lens is reduced to a short code: one +-1 entry per brand beyond the
# first, followed by its f-number. The model never sees the code itself; it
# sees one scalar per lens (the aperture, signed by brand) plus the disparity.

import itertools

import numpy as np
import torch

from bokehornot.lem import LensEmbedding
from bokehornot.lens_meta import (
    LensSpec, MetaTuple, encode_lens, lens_values, parse_lens_name, transformation_magnitude,
)
from bokehornot.network import meta_tensor

# ## Parsing lens names
#
# Dataset metadata names lenses like `Sony50mmf1.8BS`. Parsing yields a
# structured spec, and the short label is what reports use.

for name in ["Sony50mmf16.0BS", "Sony50mmf1.8BS", "Canon50mmf1.4BS", "Canon50mmf1.8BS"]:
    spec = parse_lens_name(name)
    print(f"{name:18s} -> {spec.short_label:9s} code={encode_lens(spec)} values={lens_values(spec)}")

# ## How far apart are two lenses?
#
# The magnitude of a transformation adds the aperture difference to one unit
# per flipped brand entry. Same brand: only the apertures count.

specs = [LensSpec(b, 50.0, f) for b, f in itertools.product(["Sony", "Canon"], [1.4, 1.8, 16.0])]
labels = [s.short_label for s in specs]
print("\n" + " " * 10 + "".join(f"{lab:>10}" for lab in labels))
for a in specs:
    row = [transformation_magnitude(encode_lens(a), encode_lens(b)) for b in specs]
    print(f"{a.short_label:>10}" + "".join(f"{m:10.1f}" for m in row))

# ## The embedding separates the dataset's lens pairs
#
# With random weights the 48-d conditioning vectors for the four real
# transformations are already distinct, so training has something to work with.

torch.manual_seed(0)
lem = LensEmbedding()
pairs = [("Sony", 16.0, "Sony", 1.8), ("Sony", 1.8, "Sony", 16.0),
         ("Sony", 16.0, "Canon", 1.4), ("Canon", 1.4, "Sony", 16.0)]
metas = [MetaTuple(str(i), LensSpec(b1, 50, f1), LensSpec(b2, 50, f2), 2.0)
         for i, (b1, f1, b2, f2) in enumerate(pairs)]
with torch.no_grad():
    vecs = lem(meta_tensor(metas)).numpy()
dist = np.linalg.norm(vecs[:, None] - vecs[None], axis=-1)
print("\npairwise distances between conditioning vectors:")
print(np.array2string(dist, precision=3))
