"""
Mask-aware resampling
=====================

The encoder halves resolution with MADS and the decoder doubles it with MAUS.
Both carry the damage mask along, so every scale knows which pixels are holes.
"""
import numpy as np

from mural_restore.data import gen_mask
from mural_restore.mauds import MADS, MAUS, build_mask_pyramid, mask_slot_indices
from mural_restore.tensor import Tensor

rng = np.random.default_rng(0)
mask = gen_mask(seed=1, size=32)[None]

# The mask pyramid uses 2x2 max pooling: a coarse pixel is damaged if any of
# its four children is.
for level, m in enumerate(build_mask_pyramid(mask, 3)):
    print(f"level {level}: {m.shape[1]}x{m.shape[2]}  damaged fraction {m.data.mean():.3f}")

# Shape laws: down doubles channels, up halves them.
x = Tensor(rng.standard_normal((1, 32, 32, 8)))
pyramid = build_mask_pyramid(mask, 2)
down = MADS(8, rng)(x, pyramid[0])
up = MAUS(16, rng)(down, pyramid[1])
print("input", x.shape, "-> MADS", down.shape, "-> MAUS", up.shape)

# MADS interleaves feature and mask channels before its grouped fuse conv.
# The mask slot each pair reads cycles through the four sub-pixel offsets.
print("mask slot per channel pair:", mask_slot_indices(16).tolist())
