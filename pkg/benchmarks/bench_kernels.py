"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--n 512] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from fibrepair import _kernels as k
from fibrepair.tomography import CANONICAL_SETTINGS


def cases(n):
    rng = np.random.default_rng(0)
    d = np.linspace(-3.0, 3.0, n)
    x = rng.normal(scale=4.0, size=(n, n))
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    states = np.array([s.state() for s in CANONICAL_SETTINGS])
    t = rng.normal(size=16)
    counts = rng.poisson(1000, size=16).astype(float)
    return {
        f"jsa_field {n}x{n}": ("jsa_field", (d, d, x, k.PUMP_GAUSSIAN, 1.0, 1, k.PM_SINC)),
        f"diagonal_sums {n}x{n}": ("diagonal_sums", (m,)),
        "nll (16 settings)": ("nll", (t, states, counts, 4000.0, False)),
    }


def best(fn, args, repeat):
    number = max(1, int(0.2 / max(min(timeit.repeat(lambda: fn(*args), number=1, repeat=3)), 1e-7)))
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=512, help="grid points per axis")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not k.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':<24}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, (base, call) in cases(args.n).items():
        fn_np, fn_nb = getattr(k, base + "_numpy"), getattr(k, base + "_numba")
        a, b = fn_np(*call), fn_nb(*call)  # also triggers compilation
        if not np.allclose(a, b, rtol=1e-10, atol=1e-12):
            raise SystemExit(f"{name}: numba and numpy results differ")
        t_np, t_nb = best(fn_np, call, args.repeat), best(fn_nb, call, args.repeat)
        print(f"{name:<24}{t_np * 1e3:>10.3f}ms{t_nb * 1e3:>10.3f}ms{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
