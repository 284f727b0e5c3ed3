"""Compiled vs numpy kernels at the network's working shapes.

    python benchmarks/bench_kernels.py [--repeat N]

Times conv forward/backward for both layers at batch 14, schedule building on
a 599-step profile, and one training epoch over 225 samples with each backend
patched in.
"""

import argparse
import timeit

import numpy as np

from popcnn import kernels
from popcnn.pop_model import PopConfig, build
from popcnn.training import OptimizerState, sgd_step

BATCH = 14


def conv_cases(rng):
    net = build(PopConfig())
    x1 = rng.uniform(size=(BATCH, 1, 16, 250))
    a1 = rng.uniform(size=(BATCH, 8, 1, 124))
    g1 = rng.standard_normal((BATCH, 8, 1, 124))
    g2 = rng.standard_normal((BATCH, 16, 1, 61))
    k1, b1 = net.conv1.kernels, net.conv1.biases
    k2, b2 = net.conv2.kernels, net.conv2.biases
    return {
        "conv1 forward": lambda m: m.conv2d_forward(x1, k1, b1, 1, 2),
        "conv1 backward (no dx)": lambda m: m.conv2d_backward(x1, k1, g1, 1, 2, False),
        "conv2 forward": lambda m: m.conv2d_forward(a1, k2, b2, 1, 2),
        "conv2 backward": lambda m: m.conv2d_backward(a1, k2, g2, 1, 2, True),
    }


def epoch_fn(rng):
    x = rng.uniform(size=(225, 1, 16, 250))
    y = rng.uniform(-1, 1, size=225)

    def run(mod):
        saved = kernels.conv2d_forward, kernels.conv2d_backward
        kernels.conv2d_forward, kernels.conv2d_backward = mod.conv2d_forward, mod.conv2d_backward
        try:
            net = build(PopConfig())
            params = net.parameters()
            state = OptimizerState.zeros_like(params)
            for start in range(0, 225, BATCH):
                _, grads = net.loss_and_grads(x[start:start + BATCH], y[start:start + BATCH])
                sgd_step(params, grads, state, 0.01, 0.8, 1e-4, net.decay_mask())
        finally:
            kernels.conv2d_forward, kernels.conv2d_backward = saved

    return run


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))
    else:
        print("compiled extension not built; timing the numpy fallback only")

    profile = np.abs(rng.standard_normal(599)) * 50
    cases = dict(conv_cases(rng))
    cases["schedule (599 steps)"] = lambda m: m.threshold_crossings(profile, 400.0)
    cases["training epoch (225)"] = epoch_fn(rng)

    names = [n for n, _ in backends]
    print(f"{'kernel':<26}" + "".join(f"{n:>14}" for n in names)
          + ("     speedup" if len(names) == 2 else ""))
    for label, fn in cases.items():
        times = [best_of(lambda: fn(mod), args.repeat) for _, mod in backends]
        cells = "".join(f"{t * 1e6:>11.1f} us" for t in times)
        extra = f"{times[0] / times[1]:>11.2f}x" if len(times) == 2 else ""
        print(f"{label:<26}{cells}{extra}")


if __name__ == "__main__":
    main()
