"""
Frequency focus descriptors
===========================

The attention module gates features with two frequency-aware blocks. The
channel gate looks at each channel's spectrum; the spatial gate looks at a
high-pass map. A flat image has no high-frequency energy at all.
"""
import numpy as np

from mural_restore.cfa import CFFB, SFFB
from mural_restore.data import gen_clean
from mural_restore.tensor import Tensor

img = Tensor(gen_clean(seed=0, size=32)[None])
flat = Tensor(np.full((1, 32, 32, 3), 0.5))

# Descriptor per channel: [spatial mean, mean non-DC spectral magnitude].
for name, x in (("texture", img), ("flat", flat)):
    d = CFFB(3, np.random.default_rng(0)).descriptor(x).data.reshape(2, 3)
    print(f"{name:8s} mean {d[0].round(3)}  spectral {d[1].round(5)}")

# The spatial descriptor stacks channel mean, channel max and the high-pass
# channel mean; the last is exactly zero for a constant image.
print("high-pass energy, texture:", np.abs(SFFB.highpass_map(img).data).mean().round(5))
print("high-pass energy, flat:   ", np.abs(SFFB.highpass_map(flat).data).max())

rng = np.random.default_rng(0)
gate_c = CFFB(3, rng)(img).data.ravel()
gate_s = SFFB(rng)(img).data
print("channel gate", gate_c.round(3), " spatial gate range",
      gate_s.min().round(3), gate_s.max().round(3))
