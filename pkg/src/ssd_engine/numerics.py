"""Dense-array primitives shared by every stage of the engine.

All functions are pure, operate on numpy arrays in float32 or float64, and
preserve the input dtype. Reductions run in a fixed order so that repeated
calls on identical inputs are bitwise reproducible; that determinism is load
bearing for the masking and generation tests downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOFTPLUS_OVERFLOW = 20.0

_COMPUTE_DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class ElemPolicy:
    """Element-type policy for one engine instance.

    compute     -- working precision, "f32" or "f64".
    decay_exp   -- precision of exp(A_log) in the discretization: "f32" keeps
                   it at full working precision, "bf16e" emulates a bfloat16
                   round of the exponential (the ablation path; never default).

    The residual stream always runs in the compute dtype, which is never below
    float32 and never bf16-emulated.
    """

    compute: str = "f32"
    decay_exp: str = "f32"

    def __post_init__(self):
        if self.compute not in _COMPUTE_DTYPES:
            raise ValueError(f"compute must be 'f32' or 'f64', got {self.compute!r}")
        if self.decay_exp not in ("f32", "bf16e"):
            raise ValueError(f"decay_exp must be 'f32' or 'bf16e', got {self.decay_exp!r}")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(_COMPUTE_DTYPES[self.compute])

    @property
    def residual_dtype(self) -> np.dtype:
        # Floor is float32; in f64 mode the residual carries full precision.
        return self.dtype

    @property
    def bf16_decay(self) -> bool:
        return self.decay_exp == "bf16e"


def softplus(x: np.ndarray) -> np.ndarray:
    """Elementwise log(1 + exp(x)); returns x exactly for x > 20."""
    x = np.asarray(x)
    safe = np.minimum(x, SOFTPLUS_OVERFLOW)
    return np.where(x > SOFTPLUS_OVERFLOW, x, np.log1p(np.exp(safe))).astype(x.dtype, copy=False)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, overflow-free on both tails."""
    x = np.asarray(x)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype, copy=False)


def silu(x: np.ndarray) -> np.ndarray:
    """Elementwise x * sigmoid(x)."""
    x = np.asarray(x)
    return (x * sigmoid(x)).astype(x.dtype, copy=False)


def bf16_round(x: np.ndarray) -> np.ndarray:
    """Round float32 values to the nearest bfloat16, stored back in float32.

    Round-to-nearest-even on the 16 truncated mantissa bits; idempotent. NaNs
    pass through quietened, infinities are preserved.
    """
    x = np.asarray(x)
    if x.dtype != np.float32:
        raise ValueError(f"bf16_round expects float32 input, got {x.dtype}")
    bits = np.ascontiguousarray(x).view(np.uint32)
    lsb = (bits >> np.uint32(16)) & np.uint32(1)
    rounded = (bits + np.uint32(0x7FFF) + lsb) & np.uint32(0xFFFF0000)
    out = rounded.view(np.float32)
    # Rounding a NaN payload can carry into the exponent; re-quiet them.
    nan_mask = np.isnan(x)
    if nan_mask.any():
        out = np.where(nan_mask, np.float32(np.nan), out)
    return out


def cumsum_last(x: np.ndarray) -> np.ndarray:
    """Inclusive prefix sum along the last axis, left-to-right accumulation."""
    x = np.asarray(x)
    if x.ndim < 1:
        raise ValueError("cumsum_last requires rank >= 1")
    return np.cumsum(x, axis=-1, dtype=x.dtype)


def tril_mask_static(m: np.ndarray, fill: float) -> np.ndarray:
    """Replace strict upper-triangle entries of the trailing (L, L) dims with fill.

    Single whole-tensor select against a precomputed lower-triangle mask.
    """
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square trailing dims, got shape {m.shape}")
    size = m.shape[-1]
    keep = np.tril(np.ones((size, size), dtype=bool))
    return np.where(keep, m, m.dtype.type(fill))


def tril_mask_rowwise(m: np.ndarray, fill: float) -> np.ndarray:
    """Row-indexed variant of tril_mask_static: slice each row, overwrite its tail.

    Mathematically identical (masking is pure selection); kept as the ablation
    counterpart that must stay bitwise equal to the static mask.
    """
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square trailing dims, got shape {m.shape}")
    out = m.copy()
    size = m.shape[-1]
    for row in range(size):
        row_slice = out[..., row, :]
        row_slice[..., row + 1 :] = m.dtype.type(fill)
    return out


def segsum(x: np.ndarray, mask_fn=tril_mask_static) -> np.ndarray:
    """Segment-sum: out[..., i, j] = sum(x[..., j+1 : i+1]) for i >= j, else -inf.

    Computed as an inclusive cumsum followed by the pairwise difference
    c[i] - c[j], then strict-upper masking to -inf. The diagonal is exactly 0,
    so exp(segsum(x)) has a unit diagonal and exact zeros above it.
    """
    x = np.asarray(x)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise ValueError("segsum requires a last extent of at least 1")
    c = cumsum_last(x)
    diff = c[..., :, None] - c[..., None, :]
    return mask_fn(diff, -np.inf)


def rmsnorm_gated(y: np.ndarray, z: np.ndarray, weight: np.ndarray, eps: float) -> np.ndarray:
    """Gated RMS norm: normalize y * silu(z) over the last axis, scale by weight.

    Variance is computed in the working dtype, which is at least float32.
    """
    y = np.asarray(y)
    u = y * silu(np.asarray(z, dtype=y.dtype))
    variance = np.mean(np.square(u), axis=-1, keepdims=True, dtype=u.dtype)
    out = u / np.sqrt(variance + y.dtype.type(eps))
    return (out * np.asarray(weight, dtype=y.dtype)).astype(y.dtype, copy=False)


def rmsnorm(x: np.ndarray, weight: np.ndarray, eps: float) -> np.ndarray:
    """Plain (ungated) RMS norm over the last axis."""
    x = np.asarray(x)
    variance = np.mean(np.square(x), axis=-1, keepdims=True, dtype=x.dtype)
    out = x / np.sqrt(variance + x.dtype.type(eps))
    return (out * np.asarray(weight, dtype=x.dtype)).astype(x.dtype, copy=False)


def depthwise_causal_conv(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Per-channel causal 1-D convolution with silu activation.

    x: (B, T, C), w: (C, k), bias: (C,). Positions before the sequence start
    are zero. out[b, t, c] = silu(bias[c] + sum_j w[c, j] * x[b, t-(k-1)+j, c]).
    """
    x = np.asarray(x)
    w = np.asarray(w, dtype=x.dtype)
    bias = np.asarray(bias, dtype=x.dtype)
    if x.ndim != 3 or w.ndim != 2 or w.shape[0] != x.shape[2]:
        raise ValueError(f"shape mismatch: x {x.shape}, w {w.shape}")
    batch, seq, channels = x.shape
    k = w.shape[1]
    if k < 1:
        raise ValueError("kernel size must be >= 1")
    padded = np.zeros((batch, seq + k - 1, channels), dtype=x.dtype)
    padded[:, k - 1 :, :] = x
    acc = np.zeros((batch, seq, channels), dtype=x.dtype)
    for j in range(k):  # kernel taps accumulated oldest-first
        acc += w[:, j] * padded[:, j : j + seq, :]
    return silu(acc + bias)
