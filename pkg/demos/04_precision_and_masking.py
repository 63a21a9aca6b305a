"""Two ablations: decay precision matters, masking strategy does not.

First swaps the float32 decay exponential for an emulated-bfloat16 one and
watches the logit error grow with depth - the truncation compounds through
the layer stack. Then swaps the static triangular mask for the row-by-row
variant and confirms the outputs are bitwise identical: masking is pure
selection, so the strategy can only affect speed, never values.
"""

import numpy as np

from ssd_engine import prefill, random_init, ssd_forward
from ssd_engine.verify import random_ssd_instance, tiny_config

tokens = np.random.default_rng(3).integers(0, 64, size=(1, 64))

print("decay precision ablation (float32 baseline vs emulated bf16):")
print(f"{'layers':>8} {'max |logit diff|':>18}")
for n_layers in (2, 6, 12, 24):
    cfg = tiny_config(seed_dims=(32, n_layers, 8, 8))
    params = random_init(cfg, 11)
    base, _ = prefill(params, tokens, cfg)
    ablated, _ = prefill(params, tokens, cfg.with_policy(decay_exp="bf16e"))
    print(f"{n_layers:>8} {np.abs(ablated - base).max():>18.3e}")

cfg = tiny_config(seed_dims=(32, 2, 8, 8))
params = random_init(cfg, 11)
twice, _ = prefill(params, tokens, cfg)
again, _ = prefill(params, tokens, cfg)
print(f"baseline self-reproducibility: max diff = {np.abs(twice - again).max()} (exactly zero)\n")

print("masking ablation (static tril vs row-wise loop):")
rng = np.random.default_rng(4)
inst = random_ssd_instance(rng, batch=1, seq=100, heads=2, pdim=4, ndim=8, groups=1)
static = ssd_forward(inst, 16, mask_strategy="static")
rowwise = ssd_forward(inst, 16, mask_strategy="rowwise")
print(f"bitwise identical outputs: {np.array_equal(static.Y, rowwise.Y)}")
print(f"bitwise identical states:  {np.array_equal(static.final_state, rowwise.final_state)}")
