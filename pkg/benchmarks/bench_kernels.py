"""Compare the compiled and NumPy backends on the two hot kernels.

    python3 benchmarks/bench_kernels.py [--N 1023] [--repeat 20]

The Bregman sum is timed on the self-similar dissipation kernel (about N^2/2
daughter/mother pairs); the sign pairing on 1000 random vectors.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from gfspec import _accel
from gfspec.evolution import DissipationKernel
from gfspec.grid import make_grid
from gfspec.kernels import OffspringDist, self_similar_model
from gfspec.operators import assemble
from gfspec.spectral import eigentriple, random_modulation


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=1023)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not _accel.HAVE_COMPILED:
        print("compiled kernels not built; only the NumPy backend is available")
    m = self_similar_model(1.0, OffspringDist.uniform())
    g = make_grid(10.0, args.N)
    op = assemble(m, g)
    t = eigentriple(op)
    kern = DissipationKernel(t, m, g)
    f = t.f_inf * (1.0 + random_modulation(g, 0, scale=g.L))
    rng = np.random.default_rng(0)
    F = rng.standard_normal((args.N, 1000))
    BF = op.matrix @ F
    wphi = g.quad_weights * g.nodes
    backends = ["numpy"] + (["cython"] if _accel.HAVE_COMPILED else [])
    print(f"N={args.N}  pairs={kern.vals.size}  repeat={args.repeat}")
    print(f"{'kernel':<14}{'backend':<9}{'ms/call':>10}{'value':>24}")
    for name, call in [
        ("bregman_coo", lambda b: kern(f, "quadratic", b)),
        ("sign_pairing", lambda b: float(np.max(_accel.sign_pairing(BF, F, wphi, 0.0, b)[0]))),
    ]:
        times = {}
        for b in backends:
            value = call(b)
            times[b] = min(timeit.repeat(lambda: call(b), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<14}{b:<9}{times[b]:>10.3f}{value:>24.15e}")
        if len(times) == 2:
            print(f"{name:<14}speedup  {times['numpy'] / times['cython']:>9.2f}x")


if __name__ == "__main__":
    main()
