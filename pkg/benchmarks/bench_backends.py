"""numba kernels vs the pure-numpy fallback, per operator and compute path.

    python benchmarks/bench_backends.py [--shape 64,64,64] [--density 0.05] [--channels 16] [--repeats 10]

Both backends run in this process; the switch is the same flag that
VOXELCONV_NO_NUMBA sets at import.
"""
import argparse

from voxelconv import _accel, bench
from voxelconv.tensor import GridShape


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--shape", type=GridShape.parse, default=GridShape(64, 64, 64))
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--repeats", type=int, default=10)
    args = p.parse_args()

    backends = [True, False] if _accel.HAVE_NUMBA else [False]
    rows = []
    for op in bench.OPERATORS:
        size = 3 if op == "subm" else 2
        for path in ("reference", "optimized"):
            totals = {}
            for flag in backends:
                _accel.USE_NUMBA = flag
                r = bench.run_bench(op, path, args.shape, args.density, args.channels, size, args.repeats)
                totals[r["backend"]] = r
            rows.append((op, path, totals))

    print(f"grid {args.shape}  density {args.density}  C={args.channels}  repeats {args.repeats}  "
          f"workers {_accel.get_workers()}")
    print(f"{'op':<5} {'path':<10} {'stage':<12} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for op, path, totals in rows:
        for stage in bench.STAGES:
            nb = totals.get("numba", {}).get("stages", {}).get(stage, {}).get("median")
            npy = totals["numpy"]["stages"][stage]["median"]
            nb_txt = f"{nb * 1e3:10.3f}" if nb is not None else f"{'-':>10}"
            ratio = f"{npy / nb:7.1f}x" if nb else f"{'-':>8}"
            print(f"{op:<5} {path:<10} {stage:<12} {nb_txt} {npy * 1e3:10.3f} {ratio}")


if __name__ == "__main__":
    main()
