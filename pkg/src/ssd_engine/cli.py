"""Command-line front end: verification, generation, benchmarks, cost model.

Exit codes: 0 success, 1 verification failure, 2 usage error (argparse's
default), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import BenchProtocol, bench_decode, bench_prefill
from .bundle import BundleError, load_bundle, random_init, save_bundle
from .cost import (
    CostReport,
    bytes_model,
    cache_bytes,
    flops_decode,
    flops_prefill,
    parse_device,
    peak_activation_bytes,
)
from .decode import generate
from .model import ModelConfig
from .verify import SUITES, run_verify, tiny_config

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _add_common(p: argparse.ArgumentParser, bundle_required: bool = False) -> None:
    p.add_argument("--bundle", required=bundle_required, help="bundle directory (manifest.json + data.bin)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--f64", action="store_true", help="run in float64 instead of float32")
    p.add_argument("--ablate-bf16-decay", action="store_true", help="bf16-round the decay exponential (ablation)")
    p.add_argument("--mask-strategy", choices=["static", "rowwise"], default="static")
    p.add_argument("--format", choices=["table", "csv", "jsonl"], default="table")


def _mode_arg(value: str) -> str:
    return {"cached": "cached", "non-cached": "non_cached"}.get(value, value)


def _parse_lengths(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssd-engine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="write a randomly initialized bundle")
    p_init.add_argument("--out", required=True)
    p_init.add_argument("--seed", type=int, default=0)
    p_init.add_argument("--vocab-size", type=int, default=64)
    p_init.add_argument("--d-model", type=int, default=32)
    p_init.add_argument("--n-layers", type=int, default=2)
    p_init.add_argument("--d-state", type=int, default=8)
    p_init.add_argument("--head-dim", type=int, default=8)
    p_init.add_argument("--expand", type=int, default=2)
    p_init.add_argument("--n-groups", type=int, default=1)
    p_init.add_argument("--conv-kernel", type=int, default=4)
    p_init.add_argument("--chunk-size", type=int, default=16)

    p_verify = sub.add_parser("verify", help="run correctness suites")
    _add_common(p_verify)
    p_verify.add_argument("--suite", default="all", help=f"comma list from {','.join(SUITES)} or 'all'")

    p_gen = sub.add_parser("generate", help="greedy generation")
    _add_common(p_gen, bundle_required=True)
    p_gen.add_argument("--prompt", default="", help="comma-separated token ids (default: random 16)")
    p_gen.add_argument("--gen-len", type=int, default=32)
    p_gen.add_argument("--mode", choices=["cached", "non-cached"], default="cached")

    p_bp = sub.add_parser("bench-prefill", help="prefill throughput sweep")
    _add_common(p_bp, bundle_required=True)
    p_bp.add_argument("--seq-len", default="128,256", help="comma list of prompt lengths")
    p_bp.add_argument("--device", default="v6e")
    p_bp.add_argument("--runs", type=int, default=5)
    p_bp.add_argument("--warmup", type=int, default=1)

    p_bd = sub.add_parser("bench-decode", help="decode throughput sweep (16-token prompt)")
    _add_common(p_bd, bundle_required=True)
    p_bd.add_argument("--seq-len", default="32,64", help="comma list of generation lengths")
    p_bd.add_argument("--mode", choices=["cached", "non-cached"], default="cached")
    p_bd.add_argument("--device", default="v6e")
    p_bd.add_argument("--runs", type=int, default=5)
    p_bd.add_argument("--warmup", type=int, default=1)

    p_cost = sub.add_parser("cost", help="analytic FLOPs/bytes without executing")
    _add_common(p_cost)
    p_cost.add_argument("--phase", choices=["prefill", "decode"], default="prefill")
    p_cost.add_argument(
        "--seq-len", default="512", help="prompt lengths (prefill) or generation lengths (decode)"
    )
    p_cost.add_argument("--mode", choices=["cached", "non-cached"], default="cached")
    p_cost.add_argument("--device", default="v6e")
    return parser


def _load_model(args) -> tuple:
    if args.bundle:
        params, cfg = load_bundle(args.bundle)
    else:
        cfg = tiny_config()
        params = random_init(cfg, args.seed)
    cfg = cfg.with_policy(
        compute="f64" if getattr(args, "f64", False) else "f32",
        decay_exp="bf16e" if getattr(args, "ablate_bf16_decay", False) else "f32",
    )
    from dataclasses import replace

    return params, replace(cfg, mask_strategy=getattr(args, "mask_strategy", "static"))


def _emit_bench(results, fmt: str) -> None:
    if fmt == "csv":
        print(CostReport.CSV_HEADER)
        for r in results:
            print("OOM" if r.oom else r.report.to_csv_row())
    elif fmt == "jsonl":
        for r in results:
            payload = {"oom": True, "model": r.report.model, "seq_len": r.report.seq_len} if r.oom else {
                **r.report.to_dict(),
                "wall_mean_s": r.wall_mean,
                "wall_std_s": r.wall_std,
                "wall_p99_s": r.wall_p99,
            }
            print(json.dumps(payload))
    else:
        header = f"{'phase':8} {'seq':>6} {'mode':>10} {'tok/s':>12} {'wall(s)':>10} {'std':>9} {'p99':>9} {'MFU':>9} {'HBU':>9} {'cache_B':>10} {'peak_B':>12}"
        print(header)
        print("-" * len(header))
        for r in results:
            if r.oom:
                print(f"{r.report.phase:8} {r.report.seq_len:>6} {r.report.mode:>10} {'OOM':>12}")
                continue
            c = r.report
            print(
                f"{c.phase:8} {c.seq_len:>6} {c.mode:>10} {c.tokens_per_s:>12.1f} "
                f"{r.wall_mean:>10.4f} {r.wall_std:>9.4f} {r.wall_p99:>9.4f} "
                f"{c.mfu:>9.2e} {c.hbu:>9.2e} {c.cache_bytes:>10} {c.peak_bytes:>12}"
            )


def cmd_init(args) -> int:
    cfg = ModelConfig(
        vocab_size=args.vocab_size,
        d_model=args.d_model,
        n_layers=args.n_layers,
        d_state=args.d_state,
        head_dim=args.head_dim,
        expand=args.expand,
        n_groups=args.n_groups,
        conv_kernel=args.conv_kernel,
        chunk_size=args.chunk_size,
    )
    params = random_init(cfg, args.seed)
    save_bundle(params, cfg, args.out)
    print(f"wrote bundle to {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    params = cfg = None
    if args.bundle:
        params, cfg = _load_model(args)
    suites = None if args.suite == "all" else [s.strip() for s in args.suite.split(",")]
    results = run_verify(params, cfg, suites, seed=args.seed)
    if args.format != "jsonl":
        width = max(len(r.suite) for r in results)
        for r in results:
            detail = " ".join(
                f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}" for k, v in r.detail.items()
            )
            print(f"{r.suite:<{width}}  {'PASS' if r.passed else 'FAIL'}  {detail}")
        print()
    # machine-readable report always follows the human table
    for r in results:
        print(json.dumps(r.to_dict()))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_generate(args) -> int:
    params, cfg = _load_model(args)
    rng = np.random.default_rng(args.seed)
    if args.prompt:
        prompt = np.asarray([[int(x) for x in args.prompt.split(",")]])
    else:
        prompt = rng.integers(0, cfg.vocab_size, size=(1, 16))
    result = generate(params, prompt, args.gen_len, mode=_mode_arg(args.mode), cfg=cfg)
    ids = result.tokens[0].tolist()
    if args.format == "jsonl":
        print(json.dumps({"prompt": prompt[0].tolist(), "tokens": ids}))
    else:
        print(" ".join(str(t) for t in ids))
    return EXIT_OK


def cmd_bench_prefill(args) -> int:
    params, cfg = _load_model(args)
    results = bench_prefill(
        params, cfg, _parse_lengths(args.seq_len), parse_device(args.device),
        BenchProtocol(warmup_runs=args.warmup, timed_runs=args.runs), seed=args.seed,
    )
    _emit_bench(results, args.format)
    return EXIT_OK


def cmd_bench_decode(args) -> int:
    params, cfg = _load_model(args)
    results = bench_decode(
        params, cfg, _parse_lengths(args.seq_len), _mode_arg(args.mode),
        parse_device(args.device), BenchProtocol(warmup_runs=args.warmup, timed_runs=args.runs),
        seed=args.seed,
    )
    _emit_bench(results, args.format)
    return EXIT_OK


def cmd_cost(args) -> int:
    _, cfg = _load_model(args)
    rows = []
    for seq_len in _parse_lengths(args.seq_len):
        if args.phase == "prefill":
            flops = flops_prefill(cfg, seq_len)
            nbytes = bytes_model(cfg, "prefill", seq_len)
            mode = "-"
            peak = peak_activation_bytes(cfg, seq_len)
        else:
            mode = _mode_arg(args.mode)
            flops = flops_decode(cfg, mode, 16, seq_len)
            if mode == "cached":
                nbytes = bytes_model(cfg, "prefill", 16) + seq_len * bytes_model(cfg, "decode_step")
                peak = cache_bytes(cfg)
            else:
                nbytes = sum(bytes_model(cfg, "prefill", 16 + g) for g in range(seq_len))
                peak = peak_activation_bytes(cfg, seq_len)
        rows.append(
            {
                "phase": args.phase,
                "seq_len": seq_len,
                "mode": mode,
                "flops": flops,
                "bytes": nbytes,
                "cache_bytes": cache_bytes(cfg),
                "peak_bytes": peak,
            }
        )
    if args.format == "jsonl":
        for row in rows:
            print(json.dumps(row))
    elif args.format == "csv":
        print("phase,seq_len,mode,flops,bytes,cache_bytes,peak_bytes")
        for row in rows:
            print(",".join(str(row[k]) for k in ("phase", "seq_len", "mode", "flops", "bytes", "cache_bytes", "peak_bytes")))
    else:
        for row in rows:
            print(
                f"{row['phase']} seq_len={row['seq_len']} mode={row['mode']} "
                f"flops={row['flops']:,} bytes={row['bytes']:,} "
                f"cache={row['cache_bytes']:,} peak={row['peak_bytes']:,}"
            )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "init": cmd_init,
        "verify": cmd_verify,
        "generate": cmd_generate,
        "bench-prefill": cmd_bench_prefill,
        "bench-decode": cmd_bench_decode,
        "cost": cmd_cost,
    }
    try:
        return handlers[args.command](args)
    except BundleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
