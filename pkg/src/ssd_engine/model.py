"""Full model stack: embedding, residual blocks around the chunked scan, head.

Each block projects the residual stream to [z | xBC | dt_raw], runs the causal
conv over xBC, splits into per-head inputs and the B/C projections, applies
the chunked scan plus the per-head skip, gates through the RMS norm, and
projects back. Residual additions always happen in the compute dtype (at
least float32, never bf16-emulated).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import ElemPolicy, depthwise_causal_conv, rmsnorm, rmsnorm_gated
from .ssd import SsdInputs, decay_coefficient, discretize, ssd_forward


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int
    n_layers: int
    d_state: int = 128
    head_dim: int = 64
    expand: int = 2
    n_groups: int = 1
    conv_kernel: int = 4
    chunk_size: int = 256
    norm_eps: float = 1e-5
    dt_limits: tuple[float, float] = (0.0, float("inf"))
    mask_strategy: str = "static"
    policy: ElemPolicy = field(default_factory=ElemPolicy)

    def __post_init__(self):
        if self.d_inner % self.head_dim != 0:
            raise ValueError(
                f"expand*d_model = {self.d_inner} not divisible by head_dim {self.head_dim}"
            )
        if self.n_heads % self.n_groups != 0:
            raise ValueError(f"n_heads {self.n_heads} not divisible by n_groups {self.n_groups}")
        if self.conv_kernel < 1 or self.chunk_size < 1:
            raise ValueError("conv_kernel and chunk_size must be >= 1")
        if self.mask_strategy not in ("static", "rowwise"):
            raise ValueError(f"unknown mask strategy {self.mask_strategy!r}")

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model

    @property
    def n_heads(self) -> int:
        return self.d_inner // self.head_dim

    @property
    def conv_dim(self) -> int:
        return self.d_inner + 2 * self.n_groups * self.d_state

    @property
    def d_in_proj(self) -> int:
        # [z | xBC | dt_raw]
        return 2 * self.d_inner + 2 * self.n_groups * self.d_state + self.n_heads

    @property
    def dtype(self) -> np.dtype:
        return self.policy.dtype

    def with_policy(self, **kwargs) -> "ModelConfig":
        return replace(self, policy=replace(self.policy, **kwargs))


@dataclass
class LayerParams:
    """One block's weights. W_in maps d_model -> [z | xBC | dt_raw]."""

    W_in: np.ndarray     # (d_model, d_in_proj)
    conv_w: np.ndarray   # (conv_dim, k)
    conv_b: np.ndarray   # (conv_dim,)
    dt_bias: np.ndarray  # (H,)
    A_log: np.ndarray    # (H,)
    D: np.ndarray        # (H,)
    norm_w: np.ndarray   # (d_inner,)
    W_out: np.ndarray    # (d_inner, d_model)


@dataclass
class ModelParams:
    embedding: np.ndarray  # (vocab, d_model); the LM head reuses its transpose
    layers: list[LayerParams]
    final_norm_w: np.ndarray  # (d_model,)


class PolicyAudit:
    """Records (site, dtype) events so policy invariants are assertable without numerics."""

    def __init__(self):
        self.events: list[tuple[str, str]] = []

    def record(self, site: str, dtype) -> None:
        self.events.append((site, str(dtype)))

    def sites(self, name: str) -> list[str]:
        return [d for s, d in self.events if s == name]


def split_projection(u: np.ndarray, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split the fused projection into (z, xBC, dt_raw) along the last axis."""
    z = u[..., : cfg.d_inner]
    xbc = u[..., cfg.d_inner : cfg.d_inner + cfg.conv_dim]
    dt_raw = u[..., cfg.d_inner + cfg.conv_dim :]
    return z, xbc, dt_raw


def split_conv_out(xbc: np.ndarray, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split post-conv channels into (x, B, C): d_inner, G*N, G*N."""
    gn = cfg.n_groups * cfg.d_state
    x = xbc[..., : cfg.d_inner]
    bmat = xbc[..., cfg.d_inner : cfg.d_inner + gn]
    cmat = xbc[..., cfg.d_inner + gn :]
    return x, bmat, cmat


def block_forward(
    layer: LayerParams,
    hidden: np.ndarray,
    cfg: ModelConfig,
    audit: PolicyAudit | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One residual block over (B, T, d_model).

    Returns (hidden_out, final ssm state (B, H, P, N), conv tail
    (B, conv_dim, k-1)). The conv tail is the last k-1 pre-activation conv
    inputs per channel, zero-padded on the left for sequences shorter than
    the window.
    """
    dtype = cfg.dtype
    batch, seq, _ = hidden.shape
    k = cfg.conv_kernel

    u = hidden @ layer.W_in.astype(dtype, copy=False)
    z, xbc, dt_raw = split_projection(u, cfg)

    conv_tail = np.zeros((batch, cfg.conv_dim, k - 1), dtype=dtype)
    if k > 1:
        tail = min(k - 1, seq)
        conv_tail[:, :, k - 1 - tail :] = np.swapaxes(xbc[:, seq - tail :, :], 1, 2)

    xbc = depthwise_causal_conv(xbc, layer.conv_w, layer.conv_b)
    x, bmat, cmat = split_conv_out(xbc, cfg)

    dt, _ = discretize(dt_raw, layer.dt_bias, layer.A_log, cfg.dt_limits, cfg.policy)
    a = decay_coefficient(layer.A_log, cfg.policy)
    if audit is not None:
        audit.record("decay_exp", "bf16e" if cfg.policy.bf16_decay else dtype)

    inputs = SsdInputs(
        X=x.reshape(batch, seq, cfg.n_heads, cfg.head_dim),
        dt=dt,
        a=a,
        Bmat=bmat.reshape(batch, seq, cfg.n_groups, cfg.d_state),
        Cmat=cmat.reshape(batch, seq, cfg.n_groups, cfg.d_state),
    )
    out = ssd_forward(inputs, cfg.chunk_size, mask_strategy=cfg.mask_strategy)

    y = out.Y + layer.D.astype(dtype, copy=False)[None, None, :, None] * inputs.X
    y = rmsnorm_gated(y.reshape(batch, seq, cfg.d_inner), z, layer.norm_w, cfg.norm_eps)
    delta = y @ layer.W_out.astype(dtype, copy=False)

    residual_dtype = cfg.policy.residual_dtype
    hidden_out = hidden.astype(residual_dtype, copy=False) + delta.astype(residual_dtype, copy=False)
    if audit is not None:
        audit.record("residual_add", residual_dtype)
    return hidden_out.astype(dtype, copy=False), out.final_state, conv_tail


def prefill(
    params: ModelParams,
    tokens: np.ndarray,
    cfg: ModelConfig,
    audit: PolicyAudit | None = None,
):
    """Run the whole prompt in one chunked pass.

    tokens: (B, T) integer ids. Returns (logits (B, T, vocab), cache) where
    the cache holds each layer's final ssm state and conv window, ready for
    single-token decoding.
    """
    from .decode import Mamba2Cache

    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ValueError(f"tokens must be (B, T), got shape {tokens.shape}")
    if np.any(tokens < 0) or np.any(tokens >= cfg.vocab_size):
        raise ValueError("token id out of range")

    dtype = cfg.dtype
    hidden = params.embedding.astype(dtype, copy=False)[tokens]
    ssm_states, conv_states = [], []
    for layer in params.layers:
        hidden, final_state, conv_tail = block_forward(layer, hidden, cfg, audit=audit)
        ssm_states.append(final_state)
        conv_states.append(conv_tail)
    hidden = rmsnorm(hidden, params.final_norm_w.astype(dtype, copy=False), cfg.norm_eps)
    logits = hidden @ params.embedding.astype(dtype, copy=False).T
    return logits, Mamba2Cache(ssm=ssm_states, conv=conv_states)
