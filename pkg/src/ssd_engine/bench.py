"""Wall-clock benchmarks paired with the analytic cost model.

Timing uses the monotonic performance counter around fully eager numpy
execution, so every run is complete before the clock stops by construction.
One benchmark runs at a time per process. Configurations that fail to
allocate are reported as OOM and skipped rather than aborting the sweep.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cost import (
    CostReport,
    DeviceSpec,
    bytes_model,
    cache_bytes,
    flops_decode,
    flops_prefill,
    hbu,
    mfu,
    peak_activation_bytes,
)
from .decode import generate
from .model import ModelConfig, ModelParams, prefill

PROMPT_LEN = 16  # fixed decode-benchmark prompt


@dataclass(frozen=True)
class BenchProtocol:
    warmup_runs: int = 1
    timed_runs: int = 5

    def __post_init__(self):
        if self.timed_runs < 1:
            raise ValueError("timed_runs must be >= 1")


@dataclass
class BenchResult:
    report: CostReport
    wall_mean: float
    wall_std: float
    wall_p99: float
    oom: bool = False


def _time_runs(fn, protocol: BenchProtocol) -> tuple[float, float, float]:
    for _ in range(protocol.warmup_runs):
        fn()
    walls = []
    for _ in range(protocol.timed_runs):
        start = time.perf_counter()
        fn()  # eager numpy: returns only once all work is complete
        walls.append(time.perf_counter() - start)
    arr = np.asarray(walls)
    return float(arr.mean()), float(arr.std()), float(np.percentile(arr, 99))


def _oom_result(name: str, phase: str, seq_len: int, mode: str) -> BenchResult:
    report = CostReport(
        model=name, phase=phase, seq_len=seq_len, mode=mode, tokens_per_s=0.0,
        flops=0, nbytes=0, mfu=0.0, hbu=0.0, cache_bytes=0, peak_bytes=0,
    )
    return BenchResult(report=report, wall_mean=0.0, wall_std=0.0, wall_p99=0.0, oom=True)


def bench_prefill(
    params: ModelParams,
    cfg: ModelConfig,
    lengths: list[int],
    device: DeviceSpec,
    protocol: BenchProtocol,
    model_name: str = "model",
    seed: int = 0,
) -> list[BenchResult]:
    rng = np.random.default_rng(seed)
    results = []
    for seq_len in lengths:
        tokens = rng.integers(0, cfg.vocab_size, size=(1, seq_len))
        try:
            mean, std, p99 = _time_runs(lambda: prefill(params, tokens, cfg), protocol)
        except MemoryError:
            results.append(_oom_result(model_name, "prefill", seq_len, "-"))
            continue
        flops = flops_prefill(cfg, seq_len)
        nbytes = bytes_model(cfg, "prefill", seq_len)
        results.append(
            BenchResult(
                report=CostReport(
                    model=model_name,
                    phase="prefill",
                    seq_len=seq_len,
                    mode="-",
                    tokens_per_s=seq_len / mean,
                    flops=flops,
                    nbytes=nbytes,
                    mfu=mfu(flops, mean, device),
                    hbu=hbu(nbytes, mean, device),
                    cache_bytes=cache_bytes(cfg),
                    peak_bytes=peak_activation_bytes(cfg, seq_len),
                ),
                wall_mean=mean,
                wall_std=std,
                wall_p99=p99,
            )
        )
    return results


def bench_decode(
    params: ModelParams,
    cfg: ModelConfig,
    lengths: list[int],
    mode: str,
    device: DeviceSpec,
    protocol: BenchProtocol,
    model_name: str = "model",
    seed: int = 0,
) -> list[BenchResult]:
    """Generate `length` tokens after a fixed 16-token prompt, per length."""
    rng = np.random.default_rng(seed)
    prompt = rng.integers(0, cfg.vocab_size, size=(1, PROMPT_LEN))
    results = []
    for gen_len in lengths:
        try:
            mean, std, p99 = _time_runs(
                lambda: generate(params, prompt, gen_len, mode=mode, cfg=cfg), protocol
            )
        except MemoryError:
            results.append(_oom_result(model_name, "decode", gen_len, mode))
            continue
        flops = flops_decode(cfg, mode, PROMPT_LEN, gen_len)
        if mode == "cached":
            nbytes = bytes_model(cfg, "prefill", PROMPT_LEN) + gen_len * bytes_model(cfg, "decode_step")
            peak = cache_bytes(cfg)
        else:
            nbytes = sum(bytes_model(cfg, "prefill", PROMPT_LEN + g) for g in range(gen_len))
            peak = peak_activation_bytes(cfg, gen_len)
        results.append(
            BenchResult(
                report=CostReport(
                    model=model_name,
                    phase="decode",
                    seq_len=gen_len,
                    mode=mode,
                    tokens_per_s=gen_len / mean,
                    flops=flops,
                    nbytes=nbytes,
                    mfu=mfu(flops, mean, device),
                    hbu=hbu(nbytes, mean, device),
                    cache_bytes=cache_bytes(cfg),
                    peak_bytes=peak,
                ),
                wall_mean=mean,
                wall_std=std,
                wall_p99=p99,
            )
        )
    return results
