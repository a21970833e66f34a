"""The receptive-field wall, and how the segment level breaks through it.

A purely local encoder is bit-exactly blind beyond n_layers * window/2:
perturbing a token farther away changes nothing at the observed position.
With the top-down update the same perturbation flows through the pooled
segments and reaches every position.
"""

import numpy as np

from tdt import Model, RngStream, desk_config

n = 48
cfg_local = desk_config(topdown_mode="none")
cfg_cross = desk_config(topdown_mode="cross")
rf = cfg_local.n_bottom_up * (cfg_local.window // 2)
print(f"bottom-up receptive field: {cfg_local.n_bottom_up} layers x "
      f"{cfg_local.window // 2} per side = {rf} positions")

rng = RngStream(3)
ids = rng.randint(3, cfg_local.vocab_size, n)
probe = n - 1  # observe the last position
flipped = ids.copy()
flipped[0] = 3 if ids[0] != 3 else 4  # perturb the first token: distance n-1

for label, cfg in (("local only  ", cfg_local), ("with top-down", cfg_cross)):
    model = Model(cfg, seed=0)
    base = model.encode(ids).data[probe]
    pert = model.encode(flipped).data[probe]
    delta = np.abs(base - pert).max()
    verdict = "bit-identical" if delta == 0.0 else f"changed by {delta:.3e}"
    print(f"    {label}: perturbation at distance {n - 1} -> output {verdict}")
