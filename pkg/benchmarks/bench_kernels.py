"""Benchmark the compiled kernels against the numpy reference.

The single-sample paths dominate boundary mining and bisection
refinement, where margins are queried one input at a time with a
data-dependent stopping rule.  Run:

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from nndecomp._kernels import _reference, available_backends
from nndecomp.boundary import PgdConfig, find_flip_pairs, refine_pair
from nndecomp.data import gen_blobs
from nndecomp.network import make_network
from nndecomp.train import TrainConfig, train_reference


def seeded_net(arch, seed=0):
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0, np.sqrt(2 / i), (o, i)) for i, o in zip(arch[:-1], arch[1:])]
    biases = [rng.normal(0, 0.1, o) for o in arch[1:]]
    return make_network(arch, weights, biases)


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench_kernel_ops(impls, repeats):
    net = seeded_net((20, 256, 4))
    rng = np.random.default_rng(1)
    x = rng.normal(size=20)
    X = rng.normal(size=(800, 20))
    targets = rng.integers(0, 4, size=800)
    masks = [(rng.random(256) < 0.5).astype(np.float64)]
    w, b = net._weights, net._biases

    cases = {
        "forward_logits (1 sample) x1000": lambda impl: [
            impl.forward_logits(w, b, x) for _ in range(1000)
        ],
        "masked_logits (1 sample) x1000": lambda impl: [
            impl.masked_logits(w, b, masks, x) for _ in range(1000)
        ],
        "input_gradient (1 sample) x1000": lambda impl: [
            impl.input_gradient(w, b, x, 0) for _ in range(1000)
        ],
        "batch_logits (800 samples)": lambda impl: impl.batch_logits(w, b, X),
        "batch_input_gradient (800)": lambda impl: impl.batch_input_gradient(w, b, X, targets),
    }
    rows = []
    for name, fn in cases.items():
        timings = {label: time_call(lambda: fn(impl), repeats) for label, impl in impls}
        rows.append((name, timings))
    return rows


def bench_pipeline_stages(impls, repeats):
    """End-to-end boundary mining on a small fixture, per backend."""
    ds = gen_blobs(4, 12, 60, separation=8.0, redundancy=6, seed=3)
    net = train_reference(ds, (12, 64, 4), TrainConfig(epochs=60, seed=3))
    ball = 1.5 * float(np.mean(ds.features.std(axis=0)))
    cfg = PgdConfig(ball_radius=ball, step_size=ball / 10, steps=20, random_start=True, seed=5)

    import nndecomp._kernels as kernels

    def mine(impl):
        saved = {n: getattr(kernels, n) for n in (
            "masked_logits", "forward_logits", "forward_trace", "input_gradient",
            "batch_masked_logits", "batch_logits", "batch_input_gradient")}
        try:
            for n in saved:
                setattr(kernels, n, getattr(impl, n))
            flips = find_flip_pairs(net, ds, cfg)
            for x, x_adv, _ in flips.pairs:
                refine_pair(net, x, x_adv, margin_tol=1e-6)
        finally:
            for n, fn in saved.items():
                setattr(kernels, n, fn)

    timings = {label: time_call(lambda: mine(impl), repeats) for label, impl in impls}
    return [("mine + refine (240 samples)", timings)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    impls = [("numpy", _reference)]
    if "cython" in available_backends():
        from nndecomp._kernels import _speedups

        impls.append(("cython", _speedups))
    else:
        print("compiled extension not available; benchmarking the reference only")

    rows = bench_kernel_ops(impls, args.repeats) + bench_pipeline_stages(impls, args.repeats)

    labels = [label for label, _ in impls]
    header = f"{'case':<36}" + "".join(f"{l:>12}" for l in labels)
    if len(labels) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, timings in rows:
        line = f"{name:<36}" + "".join(f"{timings[l] * 1e3:>10.2f}ms" for l in labels)
        if len(labels) == 2:
            line += f"{timings[labels[0]] / timings[labels[1]]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
