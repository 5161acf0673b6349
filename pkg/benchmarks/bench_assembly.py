"""Time Robin stiffness assembly with the compiled and the NumPy pair kernels.

Usage: python3 benchmarks/bench_assembly.py [n_interior ...]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fracheat import _backend
from fracheat.assembly import assemble_dirichlet_stiffness, assemble_robin_stiffness
from fracheat.kernel import FracParams
from fracheat.mesh import build_mesh


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("sizes", nargs="*", type=int, default=[64, 256, 512])
    ap.add_argument("--order", type=float, default=0.5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = ["python"] + (["cython"] if _backend.compiled_available() else [])
    params = FracParams(args.order)
    print(f"order={args.order} backends={','.join(backends)}")
    print(f"{'n':>6} {'operator':>10} " + " ".join(f"{b:>10}" for b in backends) + "   speedup  max|diff|")
    for n in args.sizes:
        robin = build_mesh((-1.0, 1.0), n, 2.0, n)
        dirichlet = build_mesh((-1.0, 1.0), n, 0.0, 0)
        for label, fn, mesh in (("dirichlet", assemble_dirichlet_stiffness, dirichlet),
                                ("robin", assemble_robin_stiffness, robin)):
            times, mats = [], []
            for b in backends:
                t, A = _time(lambda: fn(mesh, params, backend=b), args.repeat)
                times.append(t)
                mats.append(A)
            speed = times[0] / times[-1]
            diff = float(np.abs(mats[0] - mats[-1]).max())
            cells = " ".join(f"{t:9.3f}s" for t in times)
            print(f"{n:>6} {label:>10} {cells}   {speed:6.2f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
