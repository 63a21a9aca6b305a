"""O(1)-state autoregressive path: cache value, single-token step, generation.

The cache is a plain value (copyable, serializable); its byte size depends
only on the batch size and the architecture, never on how many tokens have
passed through it. decode_step is the per-token specialization of the block:
the conv readout slides a k-wide window and the state update is one decayed
outer-product accumulation per head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, ModelParams, PolicyAudit, split_conv_out, split_projection
from .numerics import rmsnorm, rmsnorm_gated, silu
from .ssd import decay_coefficient, discretize


@dataclass
class Mamba2Cache:
    """Per-layer ssm states (B, H, P, N) and conv windows (B, conv_dim, k-1)."""

    ssm: list[np.ndarray]
    conv: list[np.ndarray]

    def copy(self) -> "Mamba2Cache":
        return Mamba2Cache(ssm=[s.copy() for s in self.ssm], conv=[c.copy() for c in self.conv])

    def to_bytes(self) -> bytes:
        """Raw concatenation of all state buffers; length is position-independent."""
        return b"".join(a.tobytes() for a in self.ssm) + b"".join(a.tobytes() for a in self.conv)

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in self.ssm) + sum(a.nbytes for a in self.conv)


@dataclass
class GenerationResult:
    """tokens: (B, G) generated ids; per_step_logits: optional (B, G, vocab)."""

    tokens: np.ndarray
    steps: int
    per_step_logits: np.ndarray | None = None


def cache_init(cfg: ModelConfig, batch: int) -> Mamba2Cache:
    """All-zero cache for a fresh generation."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    dtype = cfg.dtype
    ssm = [
        np.zeros((batch, cfg.n_heads, cfg.head_dim, cfg.d_state), dtype=dtype)
        for _ in range(cfg.n_layers)
    ]
    conv = [
        np.zeros((batch, cfg.conv_dim, cfg.conv_kernel - 1), dtype=dtype)
        for _ in range(cfg.n_layers)
    ]
    return Mamba2Cache(ssm=ssm, conv=conv)


def roll_and_insert(conv_state: np.ndarray, col: np.ndarray) -> np.ndarray:
    """Drop the oldest column, append col as the newest; identity for k = 1."""
    if conv_state.shape[-1] == 0:
        return conv_state.copy()
    return np.concatenate([conv_state[:, :, 1:], col[:, :, None]], axis=2)


def _argmax_lowest(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties break toward the lowest id.
    return np.argmax(logits, axis=-1)


def decode_step(
    params: ModelParams,
    cache: Mamba2Cache,
    token: np.ndarray,
    cfg: ModelConfig,
    audit: PolicyAudit | None = None,
) -> tuple[np.ndarray, Mamba2Cache]:
    """Advance one token: (B,) ids -> ((B, vocab) logits, updated cache).

    The input cache is not mutated; a new cache value is returned.
    """
    token = np.asarray(token)
    if token.ndim != 1:
        raise ValueError(f"token must be (B,), got shape {token.shape}")
    if np.any(token < 0) or np.any(token >= cfg.vocab_size):
        raise ValueError("token id out of range")

    dtype = cfg.dtype
    batch = token.shape[0]
    hidden = params.embedding.astype(dtype, copy=False)[token]  # (B, d_model)
    new_ssm, new_conv = [], []

    for idx, layer in enumerate(params.layers):
        u = hidden @ layer.W_in.astype(dtype, copy=False)
        z, xbc_col, dt_raw = split_projection(u, cfg)

        window = np.concatenate([cache.conv[idx], xbc_col[:, :, None]], axis=2)  # (B, conv_dim, k)
        new_conv.append(window[:, :, 1:].copy())
        conv_out = silu(
            np.einsum("bck,ck->bc", window, layer.conv_w.astype(dtype, copy=False))
            + layer.conv_b.astype(dtype, copy=False)
        )
        x, bmat, cmat = split_conv_out(conv_out, cfg)

        dt, _ = discretize(
            dt_raw[:, None, :], layer.dt_bias, layer.A_log, cfg.dt_limits, cfg.policy
        )
        dt = dt[:, 0, :]  # (B, H)
        a = decay_coefficient(layer.A_log, cfg.policy)
        if audit is not None:
            audit.record("decay_exp", "bf16e" if cfg.policy.bf16_decay else dtype)

        x = x.reshape(batch, cfg.n_heads, cfg.head_dim)
        bmat = bmat.reshape(batch, cfg.n_groups, cfg.d_state)
        cmat = cmat.reshape(batch, cfg.n_groups, cfg.d_state)
        rep = cfg.n_heads // cfg.n_groups
        bh = np.repeat(bmat, rep, axis=1)
        ch = np.repeat(cmat, rep, axis=1)

        decay = np.exp(a * dt)  # (B, H), in (0, 1]
        h = decay[:, :, None, None] * cache.ssm[idx] + (
            dt[:, :, None, None] * x[:, :, :, None] * bh[:, :, None, :]
        )
        new_ssm.append(h)

        y = np.einsum("bhn,bhpn->bhp", ch, h) + layer.D.astype(dtype, copy=False)[None, :, None] * x
        y = rmsnorm_gated(y.reshape(batch, cfg.d_inner), z, layer.norm_w, cfg.norm_eps)
        delta = y @ layer.W_out.astype(dtype, copy=False)

        residual_dtype = cfg.policy.residual_dtype
        hidden = hidden.astype(residual_dtype, copy=False) + delta.astype(residual_dtype, copy=False)
        if audit is not None:
            audit.record("residual_add", residual_dtype)
        hidden = hidden.astype(dtype, copy=False)

    hidden = rmsnorm(hidden, params.final_norm_w.astype(dtype, copy=False), cfg.norm_eps)
    logits = hidden @ params.embedding.astype(dtype, copy=False).T
    return logits, Mamba2Cache(ssm=new_ssm, conv=new_conv)


def generate(
    params: ModelParams,
    prompt: np.ndarray,
    gen_len: int,
    mode: str = "cached",
    cfg: ModelConfig | None = None,
    keep_logits: bool = False,
) -> GenerationResult:
    """Greedy generation of gen_len tokens after the (B, P) prompt.

    cached: one chunked prefill, then gen_len - 1 cached steps; per-step work
    is independent of position. non_cached: every step re-runs the chunked
    prefill over the whole prefix and reads the last position (the quadratic
    baseline). Argmax ties break toward the lowest token id.
    """
    from .model import prefill

    if cfg is None:
        raise ValueError("cfg is required")
    if gen_len < 1:
        raise ValueError("gen_len must be >= 1")
    if mode not in ("cached", "non_cached"):
        raise ValueError(f"unknown mode {mode!r}")

    prompt = np.asarray(prompt)
    batch = prompt.shape[0]
    tokens = np.zeros((batch, gen_len), dtype=np.int64)
    step_logits = np.zeros((batch, gen_len, cfg.vocab_size), dtype=cfg.dtype) if keep_logits else None

    if mode == "cached":
        logits, cache = prefill(params, prompt, cfg)
        last = logits[:, -1]
        for g in range(gen_len):
            if keep_logits:
                step_logits[:, g] = last
            tokens[:, g] = _argmax_lowest(last)
            if g + 1 < gen_len:
                last, cache = decode_step(params, cache, tokens[:, g], cfg)
    else:
        for g in range(gen_len):
            seq = np.concatenate([prompt, tokens[:, :g]], axis=1)
            logits, _ = prefill(params, seq, cfg)
            last = logits[:, -1]
            if keep_logits:
                step_logits[:, g] = last
            tokens[:, g] = _argmax_lowest(last)

    return GenerationResult(tokens=tokens, steps=gen_len, per_step_logits=step_logits)
