"""Chunked state-space-duality forward pass.

The sequence is cut into fixed-size chunks. Inside a chunk the recurrence
unrolls into masked matrix algebra (a lower-triangular decay matrix applied
between the C/B contractions); across chunks a short scan propagates the
per-head (P, N) state. Four contractions carry all the heavy work:

    G      = C . B^T           (bclhn, bcshn -> bhcls)
    Y_diag = (G * L_decay) . Xbar   (bhcls, bcshp -> bclhp)
    states = (B * decay_to_end) . Xbar  (bclhn, bclhp -> bchpn)
    new    = decay_chunk . states       (bhzc, bchpn -> bzhpn)

Contractions are evaluated pairwise in exactly this order so identical inputs
always reduce identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    ElemPolicy,
    bf16_round,
    cumsum_last,
    segsum,
    softplus,
    tril_mask_rowwise,
    tril_mask_static,
)

MASK_FNS = {"static": tril_mask_static, "rowwise": tril_mask_rowwise}


@dataclass(frozen=True)
class ChunkPlan:
    """Chunking of a length-T sequence into Nc chunks of chunk_len tokens."""

    chunk_len: int
    n_chunks: int
    pad: int

    @property
    def padded_len(self) -> int:
        return self.n_chunks * self.chunk_len


@dataclass
class SsdInputs:
    """Per-head inputs to the chunked scan.

    X:    (B, T, H, P)  head inputs
    dt:   (B, T, H)     step sizes, post-softplus and post-clamp, >= 0
    a:    (H,)          continuous-time decay scalars, <= 0 per head
    Bmat: (B, T, G, N)  input projections, broadcast over H/G heads per group
    Cmat: (B, T, G, N)  readout projections
    """

    X: np.ndarray
    dt: np.ndarray
    a: np.ndarray
    Bmat: np.ndarray
    Cmat: np.ndarray

    def validate(self) -> None:
        batch, seq, heads, _ = self.X.shape
        groups = self.Bmat.shape[2]
        if self.dt.shape != (batch, seq, heads):
            raise ValueError(f"dt shape {self.dt.shape} != {(batch, seq, heads)}")
        if self.a.shape != (heads,):
            raise ValueError(f"a shape {self.a.shape} != {(heads,)}")
        if self.Bmat.shape != self.Cmat.shape:
            raise ValueError(f"Bmat {self.Bmat.shape} vs Cmat {self.Cmat.shape}")
        if self.Bmat.shape[:2] != (batch, seq):
            raise ValueError(f"Bmat leading dims {self.Bmat.shape[:2]} != {(batch, seq)}")
        if heads % groups != 0:
            raise ValueError(f"head count {heads} not divisible by group count {groups}")
        if np.any(self.dt < 0):
            raise ValueError("dt must be non-negative")
        if np.any(self.a > 0):
            raise ValueError("a must be <= 0 per head")


@dataclass
class SsdOutputs:
    Y: np.ndarray            # (B, T, H, P)
    final_state: np.ndarray  # (B, H, P, N)


def plan_chunks(seq_len: int, chunk_len: int) -> ChunkPlan:
    """Cover seq_len tokens with ceil(T/L) chunks; the tail chunk is padded."""
    if seq_len < 1 or chunk_len < 1:
        raise ValueError(f"need T >= 1 and L >= 1, got T={seq_len}, L={chunk_len}")
    n_chunks = -(-seq_len // chunk_len)
    return ChunkPlan(chunk_len=chunk_len, n_chunks=n_chunks, pad=n_chunks * chunk_len - seq_len)


def decay_coefficient(A_log: np.ndarray, policy: ElemPolicy | None = None) -> np.ndarray:
    """Per-head decay scalar a = -exp(A_log), always <= 0.

    The exponential runs at working precision; under the bf16 ablation policy
    it is rounded to bfloat16 before negation (never the default).
    """
    policy = policy or ElemPolicy()
    A_log = np.asarray(A_log)
    if not np.all(np.isfinite(A_log)):
        raise ValueError("A_log must be finite")
    exp_a = np.exp(A_log.astype(policy.dtype, copy=False))
    if policy.bf16_decay:
        exp_a = bf16_round(exp_a.astype(np.float32)).astype(policy.dtype)
    return -exp_a


def discretize(
    dt_raw: np.ndarray,
    dt_bias: np.ndarray,
    A_log: np.ndarray,
    dt_limits: tuple[float, float] = (0.0, float("inf")),
    policy: ElemPolicy | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Turn raw step logits into positive steps and per-step log decays.

    dt = clamp(softplus(dt_raw + dt_bias), dt_min, dt_max); a = -exp(A_log);
    returns (dt, a_dt) with a_dt[b, t, h] = a[h] * dt[b, t, h] <= 0.
    """
    policy = policy or ElemPolicy()
    dt_min, dt_max = dt_limits
    if not (0 <= dt_min < dt_max):
        raise ValueError(f"need 0 <= dt_min < dt_max, got {dt_limits}")
    dtype = policy.dtype
    dt_raw = np.asarray(dt_raw, dtype=dtype)
    dt = softplus(dt_raw + np.asarray(dt_bias, dtype=dtype))
    dt = np.clip(dt, dtype.type(dt_min), dtype.type(dt_max))
    a = decay_coefficient(A_log, policy)
    return dt, a * dt


def intra_chunk_output(
    Cc: np.ndarray, Bc: np.ndarray, Lmat: np.ndarray, Xbar: np.ndarray
) -> np.ndarray:
    """Within-chunk outputs: Y[b,c,l,h,p] = sum_{s<=l,n} C[l,n] B[s,n] L[l,s] Xbar[s,p].

    Cc, Bc: (B, Nc, L, H, N) after group broadcast; Lmat: (B, H, Nc, L, L)
    lower-triangular decay; Xbar: (B, Nc, L, H, P) step-scaled inputs.
    """
    gram = np.einsum("bclhn,bcshn->bhcls", Cc, Bc)
    masked = gram * Lmat
    return np.einsum("bhcls,bcshp->bclhp", masked, Xbar)


def chunk_states(Bc: np.ndarray, a_cumsum: np.ndarray, Xbar: np.ndarray) -> np.ndarray:
    """Each chunk's own contribution to its end-of-chunk state, (B, Nc, H, P, N).

    a_cumsum: (B, H, Nc, L) inclusive within-chunk cumsum of a_dt. Token l is
    decayed to the chunk end by exp(a_cumsum[..., -1] - a_cumsum[..., l]).
    """
    decay_to_end = np.exp(a_cumsum[..., -1:] - a_cumsum)
    b_decayed = Bc * np.transpose(decay_to_end, (0, 2, 3, 1))[..., None]
    return np.einsum("bclhn,bclhp->bchpn", b_decayed, Xbar)


def inter_chunk_scan(
    states: np.ndarray,
    chunk_decay_logs: np.ndarray,
    initial_state: np.ndarray | None = None,
    mask_fn=tril_mask_static,
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate chunk states: returns (state entering each chunk, final state).

    states: (B, Nc, H, P, N); chunk_decay_logs: (B, H, Nc) total log decay per
    chunk. The initial state (zeros if absent) is prepended, and a segsum over
    the zero-padded decay logs yields the (Nc+1, Nc+1) chunk-to-chunk decay
    matrix applied in one contraction.
    """
    batch, n_chunks, heads, pdim, ndim = states.shape
    if initial_state is None:
        initial_state = np.zeros((batch, heads, pdim, ndim), dtype=states.dtype)
    padded_logs = np.zeros((batch, heads, n_chunks + 1), dtype=states.dtype)
    padded_logs[..., 1:] = chunk_decay_logs
    decay_chunk = np.exp(segsum(padded_logs, mask_fn=mask_fn))
    with_init = np.concatenate([initial_state[:, None], states], axis=1)
    new_states = np.einsum("bhzc,bchpn->bzhpn", decay_chunk, with_init)
    return new_states[:, :n_chunks], new_states[:, n_chunks]


def cross_chunk_output(
    Cc: np.ndarray, prev_states: np.ndarray, a_cumsum: np.ndarray
) -> np.ndarray:
    """Readout of the state entering each chunk, decayed to every position.

    Yoff[b,c,l,h,p] = sum_n C[l,n] prev[p,n] exp(a_cumsum[l]); the inclusive
    cumsum means position l's own decay applies before readout, matching the
    sequential step order (decay, update, read).
    """
    contracted = np.einsum("bclhn,bchpn->bclhp", Cc, prev_states)
    decay_out = np.transpose(np.exp(a_cumsum), (0, 2, 3, 1))
    return contracted * decay_out[..., None]


def _broadcast_groups(mat: np.ndarray, heads: int) -> np.ndarray:
    """(B, T, G, N) -> (B, T, H, N); consecutive blocks of H/G heads share a group."""
    groups = mat.shape[2]
    if groups == heads:
        return mat
    return np.repeat(mat, heads // groups, axis=2)


def ssd_forward(
    inputs: SsdInputs,
    chunk_len: int,
    initial_state: np.ndarray | None = None,
    mask_strategy: str = "static",
) -> SsdOutputs:
    """Full chunked scan over (B, T) with O(T) work at fixed chunk length.

    Pads the tail chunk with zero inputs and zero steps, so padded positions
    have decay exp(0) = 1 and contribute nothing: the final state is exact
    over the real tokens and the padded outputs are discarded.
    """
    inputs.validate()
    mask_fn = MASK_FNS[mask_strategy]
    X, dt, a = inputs.X, inputs.dt, inputs.a
    batch, seq, heads, pdim = X.shape
    dtype = X.dtype
    plan = plan_chunks(seq, chunk_len)
    n_chunks, L = plan.n_chunks, plan.chunk_len

    Bh = _broadcast_groups(inputs.Bmat, heads).astype(dtype, copy=False)
    Ch = _broadcast_groups(inputs.Cmat, heads).astype(dtype, copy=False)

    def pad_tail(arr: np.ndarray) -> np.ndarray:
        if plan.pad == 0:
            return arr
        widths = [(0, 0)] * arr.ndim
        widths[1] = (0, plan.pad)
        return np.pad(arr, widths)

    Xp = pad_tail(X).reshape(batch, n_chunks, L, heads, pdim)
    dtp = pad_tail(dt.astype(dtype, copy=False)).reshape(batch, n_chunks, L, heads)
    Bc = pad_tail(Bh).reshape(batch, n_chunks, L, heads, -1)
    Cc = pad_tail(Ch).reshape(batch, n_chunks, L, heads, -1)

    a_dt = np.transpose(dtp * a.astype(dtype, copy=False), (0, 3, 1, 2))  # (B, H, Nc, L)
    a_cumsum = cumsum_last(a_dt)
    Lmat = np.exp(segsum(a_dt, mask_fn=mask_fn))
    Xbar = Xp * dtp[..., None]

    Ydiag = intra_chunk_output(Cc, Bc, Lmat, Xbar)
    states = chunk_states(Bc, a_cumsum, Xbar)
    prev_states, final_state = inter_chunk_scan(
        states, a_cumsum[..., -1], initial_state=_as_state(initial_state, states), mask_fn=mask_fn
    )
    Yoff = cross_chunk_output(Cc, prev_states, a_cumsum)

    Y = (Ydiag + Yoff).reshape(batch, plan.padded_len, heads, pdim)[:, :seq]
    return SsdOutputs(Y=Y, final_state=final_state)


def _as_state(initial_state: np.ndarray | None, states: np.ndarray) -> np.ndarray | None:
    if initial_state is None:
        return None
    expected = states.shape[:1] + states.shape[2:]
    if initial_state.shape != expected:
        raise ValueError(f"initial_state shape {initial_state.shape} != {expected}")
    return initial_state.astype(states.dtype, copy=False)
