"""Two-file tensor bundle: manifest.json + data.bin.

The manifest is UTF-8 JSON carrying the format version, the full model
config, and an ordered tensor table (name, dtype, shape, offset, length).
The payload is raw little-endian float32 with every section aligned to 64
bytes. This format is the bit-exact contract with the external checkpoint
converter; the engine itself never parses safetensors.
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np

from .model import LayerParams, ModelConfig, ModelParams

FORMAT_VERSION = 1
ALIGNMENT = 64


class BundleError(Exception):
    """Base class for bundle load/save failures."""


class FormatVersionError(BundleError):
    pass


class MissingTensorError(BundleError):
    pass


class TensorShapeError(BundleError):
    pass


class PayloadError(BundleError):
    pass


def tensor_names(cfg: ModelConfig) -> list[str]:
    """Canonical parameter names, in payload order."""
    names = ["embedding"]
    for i in range(cfg.n_layers):
        names += [
            f"layers.{i}.in_proj.weight",
            f"layers.{i}.conv1d.weight",
            f"layers.{i}.conv1d.bias",
            f"layers.{i}.dt_bias",
            f"layers.{i}.A_log",
            f"layers.{i}.D",
            f"layers.{i}.norm.weight",
            f"layers.{i}.out_proj.weight",
        ]
    names.append("final_norm.weight")
    return names


def tensor_shape(name: str, cfg: ModelConfig) -> tuple[int, ...]:
    """Expected shape of a canonical tensor under the given config."""
    if name == "embedding":
        return (cfg.vocab_size, cfg.d_model)
    if name == "final_norm.weight":
        return (cfg.d_model,)
    _, _, leaf = name.split(".", 2)
    shapes = {
        "in_proj.weight": (cfg.d_model, cfg.d_in_proj),
        "conv1d.weight": (cfg.conv_dim, cfg.conv_kernel),
        "conv1d.bias": (cfg.conv_dim,),
        "dt_bias": (cfg.n_heads,),
        "A_log": (cfg.n_heads,),
        "D": (cfg.n_heads,),
        "norm.weight": (cfg.d_inner,),
        "out_proj.weight": (cfg.d_inner, cfg.d_model),
    }
    if leaf not in shapes:
        raise KeyError(f"unknown canonical tensor name {name!r}")
    return shapes[leaf]


def _flatten(params: ModelParams, cfg: ModelConfig) -> dict[str, np.ndarray]:
    out = {"embedding": params.embedding, "final_norm.weight": params.final_norm_w}
    for i, layer in enumerate(params.layers):
        out[f"layers.{i}.in_proj.weight"] = layer.W_in
        out[f"layers.{i}.conv1d.weight"] = layer.conv_w
        out[f"layers.{i}.conv1d.bias"] = layer.conv_b
        out[f"layers.{i}.dt_bias"] = layer.dt_bias
        out[f"layers.{i}.A_log"] = layer.A_log
        out[f"layers.{i}.D"] = layer.D
        out[f"layers.{i}.norm.weight"] = layer.norm_w
        out[f"layers.{i}.out_proj.weight"] = layer.W_out
    return out


def _config_dict(cfg: ModelConfig) -> dict:
    return {
        "vocab_size": cfg.vocab_size,
        "d_model": cfg.d_model,
        "n_layers": cfg.n_layers,
        "d_state": cfg.d_state,
        "head_dim": cfg.head_dim,
        "expand": cfg.expand,
        "n_groups": cfg.n_groups,
        "conv_kernel": cfg.conv_kernel,
        "chunk_size": cfg.chunk_size,
        "norm_eps": cfg.norm_eps,
        # null encodes an unbounded limit; bare Infinity is not valid JSON
        "dt_limits": [None if not np.isfinite(v) else v for v in cfg.dt_limits],
    }


def _config_from_dict(raw: dict) -> ModelConfig:
    limits = [
        float("inf") if v is None else float(v) for v in raw.get("dt_limits", [0.0, None])
    ]
    return ModelConfig(
        vocab_size=raw["vocab_size"],
        d_model=raw["d_model"],
        n_layers=raw["n_layers"],
        d_state=raw["d_state"],
        head_dim=raw["head_dim"],
        expand=raw["expand"],
        n_groups=raw["n_groups"],
        conv_kernel=raw["conv_kernel"],
        chunk_size=raw["chunk_size"],
        norm_eps=raw["norm_eps"],
        dt_limits=(float(limits[0]), float(limits[1])),
    )


def save_bundle(params: ModelParams, cfg: ModelConfig, path: str | Path) -> None:
    """Write manifest.json and data.bin under path (created if needed)."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        tensors = _flatten(params, cfg)
        entries = []
        payload = bytearray()
        for name in tensor_names(cfg):
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            if arr.shape != tensor_shape(name, cfg):
                raise TensorShapeError(
                    f"{name}: shape {arr.shape} != expected {tensor_shape(name, cfg)}"
                )
            if len(payload) % ALIGNMENT:
                payload.extend(b"\x00" * (ALIGNMENT - len(payload) % ALIGNMENT))
            entries.append(
                {
                    "name": name,
                    "dtype": "f32",
                    "shape": list(arr.shape),
                    "offset": len(payload),
                    "length": arr.nbytes,
                }
            )
            payload.extend(arr.tobytes())
        manifest = {
            "format_version": FORMAT_VERSION,
            "config": _config_dict(cfg),
            "tensors": entries,
        }
        (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        (path / "data.bin").write_bytes(bytes(payload))
    except OSError as exc:
        raise BundleError(f"cannot write bundle at {path}: {exc}") from exc


def load_bundle(path: str | Path) -> tuple[ModelParams, ModelConfig]:
    """Validate and materialize a bundle; every failure mode is named."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    payload_path = path / "data.bin"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        payload = payload_path.read_bytes()
    except OSError as exc:
        raise BundleError(f"cannot read bundle at {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BundleError(f"malformed manifest at {manifest_path}: {exc}") from exc

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"format_version {version} != supported {FORMAT_VERSION}")
    cfg = _config_from_dict(manifest["config"])

    entries = {e["name"]: e for e in manifest["tensors"]}
    if len(entries) != len(manifest["tensors"]):
        raise BundleError("duplicate tensor names in manifest")

    expected = tensor_names(cfg)
    for extra in sorted(set(entries) - set(expected)):
        warnings.warn(f"ignoring unknown tensor {extra!r} in bundle", stacklevel=2)

    prev_end = 0
    tensors: dict[str, np.ndarray] = {}
    for name in expected:
        entry = entries.get(name)
        if entry is None:
            raise MissingTensorError(f"bundle is missing tensor {name!r}")
        shape = tuple(entry["shape"])
        if shape != tensor_shape(name, cfg):
            raise TensorShapeError(
                f"{name}: manifest shape {shape} != expected {tensor_shape(name, cfg)}"
            )
        if entry["dtype"] != "f32":
            raise BundleError(f"{name}: unsupported dtype {entry['dtype']!r}")
        offset, length = entry["offset"], entry["length"]
        nelems = int(np.prod(shape)) if shape else 1
        if length != 4 * nelems:
            raise PayloadError(f"{name}: length {length} != 4*prod(shape) = {4 * nelems}")
        if offset % ALIGNMENT or offset < prev_end:
            raise PayloadError(f"{name}: offset {offset} misaligned or overlapping")
        if offset + length > len(payload):
            raise PayloadError(
                f"{name}: payload truncated (need {offset + length} bytes, have {len(payload)})"
            )
        prev_end = offset + length
        tensors[name] = (
            np.frombuffer(payload, dtype="<f4", count=nelems, offset=offset)
            .reshape(shape)
            .astype(np.float32)
        )

    layers = [
        LayerParams(
            W_in=tensors[f"layers.{i}.in_proj.weight"],
            conv_w=tensors[f"layers.{i}.conv1d.weight"],
            conv_b=tensors[f"layers.{i}.conv1d.bias"],
            dt_bias=tensors[f"layers.{i}.dt_bias"],
            A_log=tensors[f"layers.{i}.A_log"],
            D=tensors[f"layers.{i}.D"],
            norm_w=tensors[f"layers.{i}.norm.weight"],
            W_out=tensors[f"layers.{i}.out_proj.weight"],
        )
        for i in range(cfg.n_layers)
    ]
    params = ModelParams(
        embedding=tensors["embedding"], layers=layers, final_norm_w=tensors["final_norm.weight"]
    )
    return params, cfg


def random_init(cfg: ModelConfig, seed: int) -> ModelParams:
    """Deterministic desk-scale initialization from a counter-based PRNG.

    Uses numpy's Philox 4x64 bit generator keyed by the seed, drawing in
    canonical tensor order. Distributions: projections and embedding
    Normal(0, 0.02); conv weights U[-1/sqrt(k), 1/sqrt(k)] (the usual conv
    fan-in rule, which keeps the conv path roughly scale-preserving at desk
    scale); A_log = log(U[1, 16]) per head, so a = -exp(A_log) lies in
    [-16, -1]; dt_bias = softplus^-1(U[1e-3, 1e-1]); D Normal(0, 1); norm
    weights 1. A stand-in for pretrained weights, not a training-parity claim.
    """
    rng = np.random.Generator(np.random.Philox(seed))

    def normal(shape, std=0.02):
        return rng.normal(0.0, std, size=shape).astype(np.float32)

    embedding = normal((cfg.vocab_size, cfg.d_model))
    bound = 1.0 / np.sqrt(cfg.conv_kernel)
    layers = []
    for _ in range(cfg.n_layers):
        w_in = normal((cfg.d_model, cfg.d_in_proj))
        conv_w = rng.uniform(-bound, bound, size=(cfg.conv_dim, cfg.conv_kernel)).astype(
            np.float32
        )
        conv_b = np.zeros(cfg.conv_dim, dtype=np.float32)
        dt = rng.uniform(1e-3, 1e-1, size=cfg.n_heads)
        dt_bias = np.log(np.expm1(dt)).astype(np.float32)  # softplus^-1
        a_log = np.log(rng.uniform(1.0, 16.0, size=cfg.n_heads)).astype(np.float32)
        d = rng.normal(0.0, 1.0, size=cfg.n_heads).astype(np.float32)
        layers.append(
            LayerParams(
                W_in=w_in,
                conv_w=conv_w,
                conv_b=conv_b,
                dt_bias=dt_bias,
                A_log=a_log,
                D=d,
                norm_w=np.ones(cfg.d_inner, dtype=np.float32),
                W_out=normal((cfg.d_inner, cfg.d_model)),
            )
        )
    return ModelParams(
        embedding=embedding, layers=layers, final_norm_w=np.ones(cfg.d_model, dtype=np.float32)
    )


def n_params(cfg: ModelConfig) -> int:
    """Total scalar parameter count (tied head counted once)."""
    return sum(int(np.prod(tensor_shape(name, cfg))) for name in tensor_names(cfg))
