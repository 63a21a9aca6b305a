"""Checkpoint bundle round trip: init, save, inspect, load, verify bitwise.

The bundle is two files - a JSON manifest and a raw little-endian float32
payload with 64-byte-aligned sections - deliberately simple enough to parse
from any language. This demo writes one, pokes at the manifest, reloads it,
and checks the logits are bit-for-bit stable.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from ssd_engine import load_bundle, prefill, random_init, save_bundle
from ssd_engine.verify import tiny_config

cfg = tiny_config()
params = random_init(cfg, 21)

with tempfile.TemporaryDirectory() as tmp:
    save_bundle(params, cfg, tmp)
    manifest = json.loads((Path(tmp) / "manifest.json").read_text())
    payload = (Path(tmp) / "data.bin").read_bytes()

    print(f"bundle: {len(manifest['tensors'])} tensors, payload {len(payload):,} bytes")
    print(f"{'name':<28} {'shape':<14} {'offset':>8} {'length':>8}")
    for entry in manifest["tensors"][:6]:
        print(f"{entry['name']:<28} {str(entry['shape']):<14} {entry['offset']:>8} {entry['length']:>8}")
    print("...\n")

    tokens = np.random.default_rng(0).integers(0, cfg.vocab_size, size=(1, 12))
    before, _ = prefill(params, tokens, cfg)
    loaded, loaded_cfg = load_bundle(tmp)
    after, _ = prefill(loaded, tokens, loaded_cfg)
    print(f"logits bitwise stable across save/load: {np.array_equal(before, after)}")
    print(f"alignment: all offsets multiples of 64: "
          f"{all(e['offset'] % 64 == 0 for e in manifest['tensors'])}")
