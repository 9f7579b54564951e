"""Time the numba and numpy kernels on the same inputs and check they agree.

    python3 benchmarks/bench_kernels.py [--bits 4] [--species O] [--repeat 3]

The numba timing excludes compilation: each kernel is called once on a
single point before the clock starts.
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np

from pseudoqpe import kernels
from pseudoqpe.lambdas import _combined_channels, _padded
from pseudoqpe.lattice import MillerGrid, SimulationCell, reciprocal_geometry
from pseudoqpe.pseudopotential import load_species_table
from pseudoqpe.system import bundled_cells


def _run(backend, fn, repeat):
    os.environ["PSEUDOQPE_BACKEND"] = backend
    fn(warm=True)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(warm=False)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bits", type=int, default=4)
    ap.add_argument("--species", default="O")
    ap.add_argument("--cell", default="LNO-C2m")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    sp = load_species_table()[args.species]
    geom = reciprocal_geometry(SimulationCell(np.array(bundled_cells()[args.cell]["lattice"])))
    grid = MillerGrid((args.bits,) * 3)
    half = np.array(grid.half_widths("G"))
    nus = grid.points("G_d")
    l, r = 0, sp.r_proj[0]
    ci = cj = _padded(l, 0)
    chans = _combined_channels(sp, geom.volume)

    cases = {
        "aleph_max": lambda warm: kernels.aleph_max(geom.gramian, r, l, ci, cj, half,
                                                    nus[:1] if warm else nus),
        "combined_nonlocal_max": lambda warm: kernels.combined_nonlocal_max(geom.gramian, chans, half,
                                                                            nus[:1] if warm else nus),
    }
    if not kernels.HAS_NUMBA:
        print("numba is not installed; only the numpy path can run")
    print(f"{args.cell} {args.species} bits={args.bits} points={len(nus)}")
    print(f"{'kernel':24s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, fn in cases.items():
        t_np, v_np = _run("numpy", fn, args.repeat)
        if kernels.HAS_NUMBA:
            t_nb, v_nb = _run("numba", fn, args.repeat)
            diff = float(np.max(np.abs(v_nb - v_np) / np.maximum(np.abs(v_np), 1e-300)))
            print(f"{name:24s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f} {diff:13.2e}")
        else:
            print(f"{name:24s} {t_np:10.3f} {'-':>10s}")
    os.environ.pop("PSEUDOQPE_BACKEND", None)


if __name__ == "__main__":
    main()
