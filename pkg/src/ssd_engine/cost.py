"""Analytic FLOP/byte model and the MFU/HBU arithmetic.

Closed-form counts replace a compiler's cost analysis. Conventions, kept
deliberately simple and documented here once:

  * A multiply-accumulate is 2 FLOPs; elementwise transcendental chains
    (softplus, exp, silu, norms) are excluded everywhere, consistently.
  * Prefill FLOPs per layer over T tokens, Nc = ceil(T/L) chunks:
      projections   2*T*d_model*d_in + 2*T*d_inner*d_model
      conv          2*T*conv_dim*k
      intra-chunk   2*Nc*L^2*H*N  +  Nc*L^2*H  +  2*Nc*L^2*H*P
                    (C.B^T, Hadamard with the decay matrix, .Xbar)
      chunk states  4*Nc*L*H*P*N   (decay scaling + contraction)
      inter-chunk   2*Nc*H*P*N     (sequential scan: one decayed
                                    multiply-add per state element per chunk)
      cross output  2*Nc*L*H*P*N
    plus the tied head 2*T*d_model*vocab once; batch multiplies throughout.
    With pad = 0 the total is exactly linear in T, so flops(2T) = 2*flops(T).
  * Decode: cached(G) = prefill(P) + G*step; non_cached(G) = sum of prefill
    re-runs over P..P+G-1 (quadratic). Off-by-one convention: at G = 1 the
    cached count is prefill(P) + one step while non_cached is prefill(P)
    alone, since its first step re-reads only the prompt.
  * Bytes are unfused upper bounds: parameters read once per invocation plus
    one read and one write per materialized activation buffer (the paper's
    own qualification: actual traffic may be lower).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .bundle import n_params
from .model import ModelConfig


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    peak_tflops: float
    peak_gbps: float

    def __post_init__(self):
        if self.peak_tflops <= 0 or self.peak_gbps <= 0:
            raise ValueError("device peaks must be positive")


DEVICES = {
    "v6e": DeviceSpec("v6e", 918.0, 1600.0),
    "a100": DeviceSpec("a100", 312.0, 1555.0),
}


def parse_device(spec: str) -> DeviceSpec:
    """'v6e', 'a100', or 'custom:TFLOPS:GBPS'."""
    if spec in DEVICES:
        return DEVICES[spec]
    if spec.startswith("custom:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"custom device must be custom:TFLOPS:GBPS, got {spec!r}")
        return DeviceSpec("custom", float(parts[1]), float(parts[2]))
    raise ValueError(f"unknown device {spec!r}")


def mfu(flops: float, wall_seconds: float, device: DeviceSpec) -> float:
    """Achieved FLOP rate over device peak."""
    return (flops / wall_seconds) / (device.peak_tflops * 1e12)


def hbu(nbytes: float, wall_seconds: float, device: DeviceSpec) -> float:
    """Achieved byte rate over device peak bandwidth."""
    return (nbytes / wall_seconds) / (device.peak_gbps * 1e9)


def _n_chunks(seq_len: int, chunk_len: int) -> int:
    return -(-seq_len // chunk_len)


def flops_prefill(cfg: ModelConfig, seq_len: int, batch: int = 1) -> int:
    """Closed-form prefill FLOPs per the layer breakdown in the module docstring."""
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    L = cfg.chunk_size
    nc = _n_chunks(seq_len, L)
    h, p, n, k = cfg.n_heads, cfg.head_dim, cfg.d_state, cfg.conv_kernel
    per_layer = (
        2 * seq_len * cfg.d_model * cfg.d_in_proj
        + 2 * seq_len * cfg.d_inner * cfg.d_model
        + 2 * seq_len * cfg.conv_dim * k
        + 2 * nc * L * L * h * n
        + nc * L * L * h
        + 2 * nc * L * L * h * p
        + 4 * nc * L * h * p * n
        + 2 * nc * h * p * n
        + 2 * nc * L * h * p * n
    )
    head = 2 * seq_len * cfg.d_model * cfg.vocab_size
    return batch * (cfg.n_layers * per_layer + head)


def flops_decode_step(cfg: ModelConfig, batch: int = 1) -> int:
    """Per-token FLOPs of the cached step; no dependence on position.

    Per layer: projections, the k-tap conv readout, the decayed outer-product
    state update (3 FLOPs per (H, P, N) element: decay multiply, increment
    multiply, add), and the state readout; plus the tied head.
    """
    h, p, n, k = cfg.n_heads, cfg.head_dim, cfg.d_state, cfg.conv_kernel
    per_layer = (
        2 * cfg.d_model * cfg.d_in_proj
        + 2 * cfg.d_inner * cfg.d_model
        + 2 * cfg.conv_dim * k
        + 3 * h * p * n
        + 2 * h * p * n
    )
    head = 2 * cfg.d_model * cfg.vocab_size
    return batch * (cfg.n_layers * per_layer + head)


def flops_decode(cfg: ModelConfig, mode: str, prompt_len: int, gen_len: int, batch: int = 1) -> int:
    """Total decode FLOPs: affine in gen_len when cached, quadratic otherwise."""
    if gen_len < 1:
        raise ValueError("gen_len must be >= 1")
    if mode == "cached":
        return flops_prefill(cfg, prompt_len, batch) + gen_len * flops_decode_step(cfg, batch)
    if mode == "non_cached":
        return sum(flops_prefill(cfg, prompt_len + g, batch) for g in range(gen_len))
    raise ValueError(f"unknown mode {mode!r}")


def cache_bytes(cfg: ModelConfig, batch: int = 1) -> int:
    """Exact cache footprint: fixed-size state, independent of tokens processed."""
    itemsize = cfg.dtype.itemsize
    per_layer = cfg.n_heads * cfg.head_dim * cfg.d_state + cfg.conv_dim * (cfg.conv_kernel - 1)
    return batch * cfg.n_layers * per_layer * itemsize


def _activation_elems_prefill(cfg: ModelConfig, seq_len: int) -> list[tuple[str, int]]:
    """Materialized activation buffers of one forward pass, in element counts."""
    L = cfg.chunk_size
    nc = _n_chunks(seq_len, L)
    h, p, n = cfg.n_heads, cfg.head_dim, cfg.d_state
    t = seq_len
    per_layer = [
        ("in_proj_out", t * cfg.d_in_proj),
        ("conv_out", t * cfg.conv_dim),
        ("decay_matrix", h * nc * L * L),
        ("gram", h * nc * L * L),
        ("masked_gram", h * nc * L * L),
        ("x_scaled", t * h * p),
        ("y_diag", t * h * p),
        ("chunk_states", nc * h * p * n),
        ("chunk_decay", h * (nc + 1) * (nc + 1)),
        ("entering_states", nc * h * p * n),
        ("y_cross", t * h * p),
        ("gated_norm", t * cfg.d_inner),
        ("out_proj_out", t * cfg.d_model),
        ("residual", t * cfg.d_model),
    ]
    buffers = [(name, elems * cfg.n_layers) for name, elems in per_layer]
    buffers.append(("embedding_out", t * cfg.d_model))
    buffers.append(("logits", t * cfg.vocab_size))
    return buffers


def bytes_model(cfg: ModelConfig, phase: str, seq_len: int | None = None, batch: int = 1) -> int:
    """Analytic unfused byte traffic: params once + activations read and written."""
    itemsize = cfg.dtype.itemsize
    param_traffic = n_params(cfg) * 4  # stored f32
    if phase == "prefill":
        if seq_len is None or seq_len < 1:
            raise ValueError("prefill byte count needs seq_len >= 1")
        act = sum(e for _, e in _activation_elems_prefill(cfg, seq_len))
        return param_traffic + 2 * batch * act * itemsize
    if phase == "decode_step":
        per_layer = (
            cfg.d_in_proj
            + cfg.conv_dim
            + cfg.d_inner
            + cfg.d_model
            + cfg.d_model
            # cache read + write
            + 2 * (cfg.n_heads * cfg.head_dim * cfg.d_state + cfg.conv_dim * (cfg.conv_kernel - 1))
        )
        act = cfg.n_layers * per_layer + cfg.d_model + cfg.vocab_size
        return param_traffic + 2 * batch * act * itemsize
    raise ValueError(f"unknown phase {phase!r}")


def peak_activation_bytes(cfg: ModelConfig, seq_len: int, batch: int = 1) -> int:
    """Analytic peak live-activation footprint of one forward over seq_len tokens.

    Every term scales at least linearly with seq_len, making this the
    linear-growth witness for the non-cached decode path (which re-runs a
    forward over the whole prefix each step; the fixed 16-token prompt is an
    O(1) term and excluded).
    """
    elems = sum(e for _, e in _activation_elems_prefill(cfg, seq_len))
    return batch * elems * cfg.dtype.itemsize


@dataclass
class CostReport:
    """One benchmark configuration's analytic and measured numbers."""

    model: str
    phase: str
    seq_len: int
    mode: str
    tokens_per_s: float
    flops: int
    nbytes: int
    mfu: float
    hbu: float
    cache_bytes: int
    peak_bytes: int

    CSV_HEADER = "model,phase,seq_len,mode,tokens_per_s,flops,bytes,mfu,hbu,cache_bytes,peak_bytes"

    def to_csv_row(self) -> str:
        return ",".join(
            [
                self.model,
                self.phase,
                str(self.seq_len),
                self.mode,
                repr(self.tokens_per_s),
                str(self.flops),
                str(self.nbytes),
                repr(self.mfu),
                repr(self.hbu),
                str(self.cache_bytes),
                str(self.peak_bytes),
            ]
        )

    @classmethod
    def from_csv_row(cls, row: str) -> "CostReport":
        parts = row.strip().split(",")
        names = cls.CSV_HEADER.split(",")
        if len(parts) != len(names):
            raise ValueError(f"expected {len(names)} CSV fields, got {len(parts)}")
        return cls(
            model=parts[0],
            phase=parts[1],
            seq_len=int(parts[2]),
            mode=parts[3],
            tokens_per_s=float(parts[4]),
            flops=int(parts[5]),
            nbytes=int(parts[6]),
            mfu=float(parts[7]),
            hbu=float(parts[8]),
            cache_bytes=int(parts[9]),
            peak_bytes=int(parts[10]),
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
