"""
Procedural murals and their damage
==================================

Each synthetic sample is a layered pigment texture plus a binary damage mask.
This script draws one texture, one mask of each kind, and writes a contact
sheet PNG so the four damage styles can be compared side by side.
"""
import sys
from pathlib import Path

import numpy as np

from mural_restore.data import MASK_KINDS, MaskSpec, gen_clean, gen_mask, quantize, write_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "damage_masks.png")

# A clean texture: smooth color fields, a little grain, dark outline strokes.
clean = gen_clean(seed=3, size=64)
print("clean image", clean.shape, "range", clean.min().round(3), clean.max().round(3))

# Masks are 1 where the mural is damaged. Coverage is drawn from the MaskSpec range
# and the generator retries until it lands within 2 points of the target.
tiles = [clean]
for i, kind in enumerate(MASK_KINDS):
    mask = gen_mask(seed=10 + i, spec=MaskSpec(kind=kind), size=64)
    print(f"{kind:9s} coverage {mask.mean():.3f}")
    tiles.append(clean * (1 - mask))

# Left to right: clean, then the degraded inputs the network sees.
sheet = np.concatenate(tiles, axis=1)
write_png(out, quantize(sheet))
print("wrote", out)
