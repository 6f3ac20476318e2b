"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--plans N]

Times each dense kernel on training-sized shapes, then one training epoch
on a synthetic corpus, under every available backend.
"""
import argparse
import time

import numpy as np

from planlat.diffnet import kernels
from planlat.planingest import SynthConfig, default_schema, fit_encoder, synth_generate
from planlat.plannet import Hyperparams, init_model
from planlat.trainer import TrainConfig, train


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    # batch rows x (out, in) as seen in a 3x32, d=8 model with small groups
    for rows, n_out, n_in in ((1, 32, 40), (8, 32, 32), (64, 32, 32), (64, 9, 32)):
        x = rng.normal(size=(rows, n_in))
        W = rng.normal(size=(n_out, n_in))
        b = rng.normal(size=n_out)
        g = rng.normal(size=(rows, n_out))
        yield f"{rows}x{n_in}->{n_out}", x, W, b, g


def bench_kernels(backend, repeat, inner=2000):
    rng = np.random.default_rng(0)
    out = {}
    for label, x, W, b, g in kernel_cases(rng):
        dW, db = np.zeros_like(W), np.zeros_like(b)
        h = backend.affine_forward(x, W, b)

        def run():
            for _ in range(inner):
                backend.affine_forward(x, W, b)
                backend.affine_backward(g, x, W, dW, db)
                y = backend.relu_forward(h)
                backend.relu_backward(g, y)

        out[label] = best_of(run, repeat) / inner * 1e6
    return out


def bench_epoch(name, n_plans, repeat):
    corpus = synth_generate(SynthConfig(n_plans=n_plans, sigma=0.1, seed=7))
    enc = fit_encoder(corpus, default_schema())
    cfg = TrainConfig(epochs=1, batch_size=16, lr=1e-3)
    kernels.use_backend(name)

    def run():
        train(init_model(enc, Hyperparams(3, 32, 8, 0)), corpus, cfg)

    return best_of(run, repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--plans", type=int, default=300)
    args = ap.parse_args()
    names = sorted(kernels.BACKENDS)
    original = kernels.BACKEND
    print(f"backends: {', '.join(names)} (default {original})")
    results = {n: bench_kernels(kernels.get_backend(n), args.repeat) for n in names}
    print("\nfused affine fwd+bwd + relu fwd+bwd, microseconds per call")
    print(f"{'shape':>16} " + " ".join(f"{n:>10}" for n in names))
    for label in results[names[0]]:
        print(f"{label:>16} " + " ".join(f"{results[n][label]:10.2f}" for n in names))
    print(f"\none training epoch, {args.plans} plans, 3x32 d=8, batch 16 (seconds)")
    try:
        for n in names:
            print(f"{n:>16} {bench_epoch(n, args.plans, args.repeat):10.3f}")
    finally:
        kernels.use_backend(original)


if __name__ == "__main__":
    main()
