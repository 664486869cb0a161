"""Command line interface.

Exit codes: 0 success, 2 usage error, 3 malformed input file,
4 solver failure, 5 I/O failure, 6 attack collection/conditioning failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import attack as kpa
from .errors import (
    CollectionError,
    ConditioningError,
    FormatError,
    NoUsableMeasurementsError,
    SolverError,
)
from .formats import read_package, read_pgm, write_package, write_pgm
from .keyrng import SecretKey, derive_streams, format_streams
from .pipeline import (
    compress_randomized,
    encode_image,
    measure,
    measurement_stats,
    randomize_image,
)
from .recon import BasisKind, SolverConfig, decode, psnr
from .srm import RandomizerKind, SensingConfig, TransformKind

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_SOLVER = 4
EXIT_IO = 5
EXIT_ATTACK = 6

_TRANSFORMS = {"dct": TransformKind.DCT, "wht": TransformKind.WHT}
_RANDOMIZERS = {"perm": RandomizerKind.PERMUTATION, "sign": RandomizerKind.BERNOULLI_SIGN}
_BASES = {"dct2d": BasisKind.DCT2D, "haar2d": BasisKind.HAAR2D}


class UsageError(Exception):
    pass


def _load_key(args) -> SecretKey:
    if args.key and args.key_file:
        raise UsageError("give either --key or --key-file, not both")
    if args.key_file:
        text = Path(args.key_file).read_text()
    elif args.key:
        text = args.key
    else:
        raise UsageError("a key is required (--key or --key-file)")
    try:
        return SecretKey.from_hex(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _sensing_config(args, shape, randomizer=None) -> SensingConfig:
    h, w = shape
    rz = randomizer if randomizer is not None else _RANDOMIZERS[args.randomizer]
    try:
        return SensingConfig.from_rate(h, w, args.block_size, args.sr,
                                       transform=_TRANSFORMS[args.transform], randomizer=rz)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _solver_config(args) -> SolverConfig:
    try:
        return SolverConfig(tau=args.tau, tau_rel=args.tau_rel, max_iters=args.max_iters,
                            rel_tol=args.rel_tol, basis=_BASES[args.basis], debias=args.debias)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_keygen(args):
    key = SecretKey.generate()
    if args.output:
        Path(args.output).write_text(key.hex() + "\n")
    else:
        print(key.hex())


def cmd_sense(args):
    key = _load_key(args)
    image = read_pgm(args.image)
    cfg = _sensing_config(args, image.shape)
    pkg = encode_image(image, cfg, key)
    write_package(args.output, pkg)
    print(f"M={cfg.m} N={cfg.n} sr={cfg.sampling_rate:.6f} bytes={len(pkg.to_bytes())}")


def cmd_reconstruct(args):
    key = _load_key(args)
    pkg = read_package(args.package)
    out = decode(pkg, key, _solver_config(args))
    write_pgm(args.output, out.image)
    parts = [f"kept={out.kept.size}/{pkg.m}", f"iterations={out.result.iterations}",
             f"converged={int(out.result.converged)}"]
    if args.reference:
        ref = read_pgm(args.reference)
        try:
            value = psnr(ref, _to_uint8(out.image))
        except ValueError as exc:
            raise UsageError(f"reference image: {exc}") from None
        parts.append(f"psnr={value:.4f}")
    print(" ".join(parts))


def _to_uint8(image):
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def cmd_stats(args):
    key = _load_key(args)
    image = read_pgm(args.image)
    cfg = _sensing_config(args, image.shape)
    st = measurement_stats(measure(image, cfg, key), bins=args.bins, image=image)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["section", "name", "value", "bin_low", "bin_high", "normal_quantile"])
        for name, value in st.summary().items():
            w.writerow(["summary", name, repr(value) if isinstance(value, float) else value, "", "", ""])
        for i, count in enumerate(st.hist_counts):
            w.writerow(["histogram", i, int(count), repr(float(st.hist_edges[i])),
                        repr(float(st.hist_edges[i + 1])), ""])
        for i, (t, o) in enumerate(zip(st.qq_theoretical, st.qq_ordered)):
            w.writerow(["qq", i, repr(float(o)), "", "", repr(float(t))])
    flag = " degenerate=1" if st.degenerate else ""
    print(f"qq_correlation={st.qq_correlation:.6f} excess_kurtosis={st.excess_kurtosis:.6f}"
          f" saturation_rate={st.saturation_rate:.6f}{flag}")


def cmd_randomize(args):
    key = _load_key(args)
    write_pgm(args.output, randomize_image(read_pgm(args.image), key))


def cmd_compress(args):
    key = _load_key(args)
    image = read_pgm(args.image)
    cfg = _sensing_config(args, image.shape, RandomizerKind.PERMUTATION)
    pkg = compress_randomized(image, cfg, key)
    write_package(args.output, pkg)
    print(f"M={cfg.m} N={cfg.n} sr={cfg.sampling_rate:.6f} bytes={len(pkg.to_bytes())}")


def cmd_attack_demo(args):
    n = args.n
    m = args.m if args.m is not None else max(1, int(math.floor(0.8 * n + 0.5)))
    try:
        report = kpa.run_attack(args.mode, n, m, args.seed, args.block_size, args.transform)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = report.to_text()
    if args.output:
        Path(args.output).write_text(text)
    if args.csv:
        path = Path(args.csv)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a") as fh:
            if new:
                fh.write(report.csv_header())
            fh.write(report.to_csv_row())
    sys.stdout.write(text)


def cmd_streams(args):
    key = _load_key(args)
    try:
        st = derive_streams(key, args.n, args.m)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = format_streams(st)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_psnr(args):
    a, b = read_pgm(args.a), read_pgm(args.b)
    try:
        print(f"{psnr(a, b):.4f}")
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_key(p):
    p.add_argument("--key", help="128-bit key as 32 hex characters")
    p.add_argument("--key-file", help="file holding the key as 32 hex characters")


def _add_sensing(p, randomizer=True):
    p.add_argument("--block-size", type=int, default=32)
    p.add_argument("--sr", type=float, default=0.5, help="sampling rate M/N")
    p.add_argument("--transform", choices=sorted(_TRANSFORMS), default="dct")
    if randomizer:
        p.add_argument("--randomizer", choices=sorted(_RANDOMIZERS), default="perm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdcs",
        description="Keyed compressed sensing of PGM images with quantization and diffusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a random key")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("sense", help="encode a PGM image into a cipher package")
    p.add_argument("image")
    _add_key(p)
    _add_sensing(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("reconstruct", aliases=["decode"], help="decode a cipher package")
    p.add_argument("package")
    _add_key(p)
    p.add_argument("--tau", type=float, default=None, help="absolute l1 weight")
    p.add_argument("--tau-rel", type=float, default=SolverConfig.tau_rel,
                   help="l1 weight relative to ||A^T b||_inf (used without --tau)")
    p.add_argument("--max-iters", type=int, default=SolverConfig.max_iters)
    p.add_argument("--rel-tol", type=float, default=SolverConfig.rel_tol)
    p.add_argument("--basis", choices=sorted(_BASES), default="dct2d")
    p.add_argument("--debias", action="store_true")
    p.add_argument("--reference", help="original PGM; prints PSNR")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("stats", help="measurement histogram and normality statistics as CSV")
    p.add_argument("image")
    _add_key(p)
    _add_sensing(p)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("randomize", help="owner step: permute pixels with the key")
    p.add_argument("image")
    _add_key(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_randomize)

    p = sub.add_parser("compress", help="provider step: compress a randomized image")
    p.add_argument("image")
    _add_key(p)
    _add_sensing(p, randomizer=False)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("attack-demo", help="known-plaintext attack against a hidden key")
    p.add_argument("--mode", choices=[m.value for m in kpa.AttackMode], default="raw")
    p.add_argument("--n", type=int, default=64, help="pixels (a perfect square)")
    p.add_argument("--m", type=int, default=None, help="measurements (default round(0.8 N))")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-size", type=int, default=8)
    p.add_argument("--transform", choices=sorted(_TRANSFORMS), default="dct")
    p.add_argument("-o", "--output", help="key=value report file")
    p.add_argument("--csv", help="append a CSV row to this file")
    p.set_defaults(func=cmd_attack_demo)

    p = sub.add_parser("streams", help="print the key-derived streams (golden vectors)")
    _add_key(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_streams)

    p = sub.add_parser("psnr", help="PSNR between two PGM images")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_psnr)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    try:
        args.func(args)
    except UsageError as exc:
        print(f"qdcs: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, NoUsableMeasurementsError) as exc:
        print(f"qdcs: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ValueError as exc:
        print(f"qdcs: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"qdcs: solver failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_SOLVER
    except (CollectionError, ConditioningError) as exc:
        print(f"qdcs: attack failure: {exc}", file=sys.stderr)
        return EXIT_ATTACK
    except OSError as exc:
        print(f"qdcs: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
