"""Compare the compiled and NumPy recursion kernels on a packed batch.

    python benchmarks/bench_kernels.py --hidden 32 --steps 20000
"""
import argparse
import timeit

import numpy as np

from rnntone import kernels


def make_batch(hidden, steps, mean_len, seed=0):
    rng = np.random.default_rng(seed)
    lengths = []
    while sum(lengths) < steps:
        lengths.append(int(rng.integers(max(1, mean_len // 2), mean_len * 3 // 2 + 1)))
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    zin = rng.normal(size=(offsets[-1], hidden))
    V = rng.uniform(-0.1, 0.1, size=(hidden, hidden))
    return zin, offsets, V, rng.normal(size=zin.shape)


def bench(mod, batch, repeat):
    zin, offsets, V, dhs = batch

    def step():
        hs = mod.recur_forward(zin, offsets, V, False)
        mod.pool_forward(hs, offsets, 1, False)
        mod.recur_backward(hs, dhs, offsets, V, False)

    return min(timeit.repeat(step, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--hidden", type=int, nargs="+", default=[8, 32, 128])
    p.add_argument("--steps", type=int, default=20000, help="total time steps in the batch")
    p.add_argument("--mean-len", type=int, default=15)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.insert(0, ("cython", kernels.compiled_backend))
    else:
        print("compiled extension not available; timing the NumPy fallback only")

    print(f"{'hidden':>6}  " + "  ".join(f"{name:>12}" for name, _ in backends) + "   speedup")
    for H in args.hidden:
        batch = make_batch(H, args.steps, args.mean_len)
        times = [bench(mod, batch, args.repeat) for _, mod in backends]
        cells = "  ".join(f"{t * 1e3:10.1f}ms" for t in times)
        speedup = f"{times[-1] / times[0]:8.1f}x" if len(times) == 2 else ""
        print(f"{H:>6}  {cells}  {speedup}")


if __name__ == "__main__":
    main()
