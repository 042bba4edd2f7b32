#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Per-kernel timings on model-realistic shapes, a naive-loop vs BLAS
matmul comparison (documenting why matmul stays on BLAS in both
backends), and an end-to-end training-epoch comparison.

Usage: python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from trifuse import ModelConfig, backend, init_model_params
from trifuse.data import SynthSpec, generate_synthetic
from trifuse.training import AdamState, AugmentationConfig, TrainConfig, TrainState, train


def timeit(fn, repeats, warmup=3):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_benchmarks(repeats):
    import trifuse._kernels_np as knp
    try:
        import trifuse._ckernels as kc
    except ImportError:
        print("compiled extension not built; kernel comparison skipped")
        return []

    rng = np.random.default_rng(0)
    rows, cols = 256, 64
    x = rng.standard_normal((rows, cols))
    dy = rng.standard_normal((rows, cols))
    gain = rng.standard_normal(cols)
    bias = rng.standard_normal(cols)
    y = knp.softmax_fwd(x)
    _, xhat, inv = knp.layer_norm_fwd(x, gain, bias, 1e-5)
    flat = np.ascontiguousarray(x.reshape(-1))
    dflat = np.ascontiguousarray(dy.reshape(-1))
    h = rng.standard_normal((16, 12, 64))
    mask = (rng.random((16, 12)) < 0.8).astype(np.float64)
    mask[:, 0] = 1.0
    counts = mask.sum(axis=1)
    dout = rng.standard_normal((16, 64))
    p = rng.standard_normal(4096)
    g = rng.standard_normal(4096)

    cases = [
        ("softmax_fwd 256x64", lambda m: m.softmax_fwd(x)),
        ("softmax_bwd 256x64", lambda m: m.softmax_bwd(y, dy)),
        ("layer_norm_fwd 256x64", lambda m: m.layer_norm_fwd(x, gain, bias, 1e-5)),
        ("layer_norm_bwd 256x64", lambda m: m.layer_norm_bwd(dy, xhat, inv, gain)),
        ("gelu_fwd 16k", lambda m: m.gelu_fwd(flat)),
        ("gelu_bwd 16k", lambda m: m.gelu_bwd(flat, dflat)),
        ("masked_pool_fwd 16x12x64", lambda m: m.masked_pool_fwd(h, mask, counts)),
        ("masked_pool_bwd 16x12x64", lambda m: m.masked_pool_bwd(dout, mask, counts)),
        ("adam_update 4096", lambda m: m.adam_update(
            p.copy(), g, np.zeros_like(p), np.zeros_like(p), 1,
            1e-3, 0.9, 0.999, 1e-8)),
    ]
    out = []
    for name, fn in cases:
        t_np = timeit(lambda: fn(knp), repeats)
        t_cy = timeit(lambda: fn(kc), repeats)
        out.append((name, t_np, t_cy))

    # Why matmul stays on BLAS: the naive compiled loop loses badly.
    a = rng.standard_normal((64, 64))
    b = rng.standard_normal((64, 64))
    t_blas = timeit(lambda: a @ b, repeats)
    t_naive = timeit(lambda: kc.matmul_naive(a, b), repeats)
    out.append(("matmul 64x64 (BLAS vs naive loop)", t_blas, t_naive))
    return out


def epoch_benchmark(backend_name, repeats):
    backend.set_backend(backend_name)
    ds = generate_synthetic(SynthSpec(
        n_train=210, n_val=14, informativeness=(0.6, 0.6, 0.6), seed=7))
    cfg = ModelConfig(d_model=16, n_heads=2, n_layers=1, d_ff=32,
                      dropout_p=0.1, max_seq_len=16,
                      d_img=16, d_audio=12, d_text=8)
    tc = TrainConfig(epochs=1, batch_size=16, seed=1,
                     augmentation=AugmentationConfig(0.01, 0.1))

    def one_epoch():
        rng = np.random.default_rng(1)
        params = init_model_params(cfg, rng)
        state = TrainState(params=params, adam=AdamState.fresh(params), rng=rng)
        train(params, cfg, ds.split("train"), ds.split("val"), tc, state=state)

    return timeit(one_epoch, max(1, repeats // 3), warmup=1)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    print(f"available backends: {', '.join(backend.available_backends())}")
    rows = kernel_benchmarks(args.repeats)
    if rows:
        width = max(len(r[0]) for r in rows)
        print(f"\n{'kernel'.ljust(width)}  {'numpy':>10}  {'compiled':>10}  speedup")
        for name, t_np, t_cy in rows:
            print(f"{name.ljust(width)}  {t_np * 1e6:>8.1f}us  {t_cy * 1e6:>8.1f}us  "
                  f"{t_np / t_cy:>6.2f}x")

    print("\nend-to-end (one training epoch, 210 samples):")
    for name in backend.available_backends():
        t = epoch_benchmark(name, args.repeats)
        print(f"  {name:>8}: {t * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
