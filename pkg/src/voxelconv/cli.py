"""Command-line interface: ``voxelconv {voxelize,conv,verify,bench,info}``.

Exit status is 0 on success, 1 when the operation fails, 2 on usage errors.
"""
import argparse
import json
import sys

from . import _accel, bench, engine, fileio, oracle
from .coords import BACKENDS
from .errors import ChannelMismatch, VoxelConvError
from .rules import build_inverse_map
from .tensor import REDUCERS, GridShape, voxelize


def _shape(text):
    try:
        return GridShape.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _vec3(text):
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        parts = []
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return parts


def _common(p):
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (0 = auto; default from VOXELCONV_WORKERS)")
    p.add_argument("--lct", choices=BACKENDS, default="auto", help="location table backend")
    p.add_argument("--config", help="JSON config file (key lct.dense_threshold)")


def build_parser():
    parser = argparse.ArgumentParser(prog="voxelconv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", help="points text file -> .spt")
    p.add_argument("points")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--voxel-size", type=float, required=True)
    p.add_argument("--origin", type=_vec3, default=[0.0, 0.0, 0.0])
    p.add_argument("--shape", type=_shape, required=True, help="X,Y,Z[,B]")
    p.add_argument("--reducer", choices=REDUCERS, default="mean")

    p = sub.add_parser("conv", help="apply one convolution layer to an .spt file")
    p.add_argument("input")
    p.add_argument("-w", "--weights", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mode", choices=["subm", "down", "inv"], required=True)
    p.add_argument("-k", "--kernel", type=int, help="kernel size (subm); checked against the weights")
    p.add_argument("-s", "--stride", type=int, help="stride (down/inv); checked against the weights")
    p.add_argument("--fine", help="fine index set (.spt) for --mode inv")
    p.add_argument("--path", choices=engine.PATHS, default="optimized")
    _common(p)

    p = sub.add_parser("verify", help="run the seeded oracle suites")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--shape", type=_shape, default=GridShape(32, 32, 32))
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--modes", default="subm,down,inv")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--size", type=int, help="fixed kernel size / stride (default cycles per case)")
    p.add_argument("--path", choices=engine.PATHS, default="optimized")
    _common(p)

    p = sub.add_parser("bench", help="time table build, rule generation and compute")
    p.add_argument("--op", choices=bench.OPERATORS, default="subm")
    p.add_argument("--path", choices=[*engine.PATHS, "both"], default="both")
    p.add_argument("--shape", type=_shape, default=GridShape(64, 64, 64))
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--size", type=int, default=None, help="kernel size / stride (default 3 / 2)")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="write the JSON report(s) here instead of stdout")
    _common(p)

    p = sub.add_parser("info", help="print an .spt header summary")
    p.add_argument("file")
    return parser


def _setup(args):
    workers = args.workers if args.workers is not None else _accel.default_workers()
    _accel.set_workers(workers)
    return fileio.load_config(args.config)["lct.dense_threshold"]


def cmd_voxelize(args):
    batch, xyz, feats = fileio.read_points(args.points)
    t = voxelize(batch, xyz, feats, args.voxel_size, args.origin, args.shape, args.reducer)
    fileio.save_tensor(args.output, t)
    print(f"wrote {args.output}: n={t.n} channels={t.channels} shape={t.shape}")
    return 0


def cmd_conv(args):
    threshold = _setup(args)
    t = fileio.load_tensor(args.input)
    w = fileio.load_weights(args.weights)
    if t.channels != w.in_channels:
        raise ChannelMismatch(0, w.in_channels, t.channels)
    size = w.kernel_size
    given = args.kernel if args.mode == "subm" else args.stride
    if given is not None and given != size:
        raise engine.ShapeMismatch(f"--{'kernel' if args.mode == 'subm' else 'stride'} {given} "
                                   f"disagrees with weight kernel {size}")
    opts = dict(path=args.path, backend=args.lct, dense_threshold=threshold)
    if args.mode == "subm":
        out = engine.submanifold(t, w, **opts)
    elif args.mode == "down":
        out = engine.downsample(t, w, **opts)
    else:
        if not args.fine:
            print("error: --mode inv needs --fine FINE.spt", file=sys.stderr)
            return 2
        fine = fileio.load_tensor(args.fine)
        imap = build_inverse_map(fine, t, size, backend=args.lct, dense_threshold=threshold)
        out = engine.inverse_conv(t, imap, None, w, args.path)
    fileio.save_tensor(args.output, out)
    print(f"wrote {args.output}: n={out.n} channels={out.channels} shape={out.shape}")
    return 0


def cmd_verify(args):
    _setup(args)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    unknown = set(modes) - set(oracle.CHECKS)
    if unknown:
        print(f"error: unknown modes {sorted(unknown)}", file=sys.stderr)
        return 2
    ok = True
    for mode in modes:
        cases = (
            oracle.fixed_case(args.seed + i, mode, args.shape, args.density, args.channels, args.size)
            for i in range(args.cases)
        )
        report = oracle.run_suite(cases, args.tol, path=args.path, backend=args.lct)
        status = "PASS" if report.passed else "FAIL"
        print(f"{status} {mode}: {report.summary()}")
        ok &= report.passed
    return 0 if ok else 1


def cmd_bench(args):
    threshold = _setup(args)
    size = args.size or (3 if args.op == "subm" else 2)
    paths = engine.PATHS if args.path == "both" else (args.path,)
    reports = []
    for path in paths:
        rep = bench.run_bench(args.op, path, args.shape, args.density, args.channels, size,
                              args.repeats, args.seed, args.lct, threshold)
        print(bench.format_report(rep), file=sys.stderr)
        reports.append(rep)
    doc = reports[0] if len(reports) == 1 else reports
    text = json.dumps(doc, indent=2)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_info(args):
    t = fileio.load_tensor(args.file)
    s = t.shape
    print(f"file      {args.file}")
    print(f"version   {fileio.VERSION}")
    print(f"shape     {s.max_x} x {s.max_y} x {s.max_z}, batches={s.batches}")
    print(f"n={t.n}")
    print(f"channels  {t.channels}")
    if t.n:
        lo = t.indices.min(axis=1)
        hi = t.indices.max(axis=1)
        print(f"bbox      x[{lo[1]},{hi[1]}] y[{lo[2]},{hi[2]}] z[{lo[3]},{hi[3]}]")
    return 0


COMMANDS = {
    "voxelize": cmd_voxelize,
    "conv": cmd_conv,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "info": cmd_info,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (VoxelConvError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
