"""Kernel-free Mamba-2 SSD inference engine.

Chunked-parallel prefill, O(1)-state cached decoding, a sequential-recurrence
oracle, bundle checkpoint I/O, and an analytic FLOP/byte cost model.
"""

from .bundle import load_bundle, n_params, random_init, save_bundle
from .cost import DeviceSpec, bytes_model, cache_bytes, flops_decode, flops_prefill, hbu, mfu
from .decode import GenerationResult, Mamba2Cache, cache_init, decode_step, generate
from .model import LayerParams, ModelConfig, ModelParams, block_forward, prefill
from .numerics import (
    ElemPolicy,
    bf16_round,
    cumsum_last,
    depthwise_causal_conv,
    rmsnorm_gated,
    segsum,
    silu,
    softplus,
    tril_mask_rowwise,
    tril_mask_static,
)
from .oracle import OracleReport, compare, dense_ssm, sequential_ssm
from .ssd import ChunkPlan, SsdInputs, SsdOutputs, discretize, plan_chunks, ssd_forward

__version__ = "0.1.0"

__all__ = [
    "ChunkPlan",
    "DeviceSpec",
    "ElemPolicy",
    "GenerationResult",
    "LayerParams",
    "Mamba2Cache",
    "ModelConfig",
    "ModelParams",
    "OracleReport",
    "SsdInputs",
    "SsdOutputs",
    "bf16_round",
    "block_forward",
    "bytes_model",
    "cache_bytes",
    "cache_init",
    "compare",
    "cumsum_last",
    "decode_step",
    "dense_ssm",
    "depthwise_causal_conv",
    "discretize",
    "flops_decode",
    "flops_prefill",
    "generate",
    "hbu",
    "load_bundle",
    "mfu",
    "n_params",
    "plan_chunks",
    "prefill",
    "random_init",
    "rmsnorm_gated",
    "save_bundle",
    "segsum",
    "sequential_ssm",
    "silu",
    "softplus",
    "ssd_forward",
    "tril_mask_rowwise",
    "tril_mask_static",
]
