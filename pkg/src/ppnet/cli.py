"""Command-line entry point.

Every capability is a subcommand with file-based inputs and outputs.
Standard output carries only the primary result (a number or the paths
written); diagnostics go to standard error.  Exit codes: 0 success,
1 usage error, 2 data error, 3 numerical failure.

All randomness flows from ``--seed`` through per-draw derived seeds, so
any run with a seed is bit-reproducible in its emitted files, independent
of ``--threads`` (which defaults from the PPNET_THREADS environment
variable).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .dataset import convert_kadid, convert_tid, load_image_as_tensor, load_manifest
from .errors import (ConfigurationError, DataError, InputError, NumericalError,
                     ParameterError, PpnetError, UsageError)
from .evaluate import evaluate_dataset, monte_carlo_rho_max, ssim
from .fit import FreezeSpec, fit_final_scale, fit_freeze_ladder, random_init_sweep
from .metric import perceptual_distance
from .model import (CompiledModel, ModelConfig, build_bio_model, count_params,
                    load_params, save_params)
from .viz import RenderSpec, render_kernels, render_responses

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PPNET_THREADS", "1")))
    except ValueError:
        return 1


def _add_common(p: argparse.ArgumentParser, *, params=True, seed=True,
                threads=False, fs=True):
    if params:
        p.add_argument("--params", metavar="FILE",
                       help="parameter file (default: built-in calibration)")
    if seed:
        p.add_argument("--seed", type=int, default=0,
                       help="seed for all randomness (default 0)")
    if threads:
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help="worker threads (default $PPNET_THREADS or 1)")
    if fs:
        p.add_argument("--fs", type=float, default=64.0,
                       help="image sampling frequency in cpd (default 64)")


def _load_state(args):
    if getattr(args, "params", None):
        return load_params(args.params)
    return build_bio_model(ModelConfig())


def build_parser() -> _Parser:
    parser = _Parser(prog="ppnet",
                     description="Parametric early-vision image quality engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write the calibrated parameter file")
    p.add_argument("--out", required=True, metavar="FILE")
    _add_common(p, params=False, seed=False, fs=False)

    p = sub.add_parser("distance", help="perceptual distance between two images")
    p.add_argument("ref")
    p.add_argument("dist")
    _add_common(p, seed=False)

    p = sub.add_parser("respond", help="render per-channel responses of one layer")
    p.add_argument("image")
    p.add_argument("--layer", type=int, required=True, choices=range(1, 9))
    p.add_argument("--out", required=True, metavar="FILE.pgm")
    p.add_argument("--global-norm", action="store_true",
                   help="share one gray scale across panels")
    _add_common(p, seed=False)

    p = sub.add_parser("kernels", help="render kernel montages or Fourier sums")
    p.add_argument("--layer", type=int, required=True, choices=(2, 4, 6))
    p.add_argument("--out", required=True, metavar="FILE.pgm")
    p.add_argument("--fourier", action="store_true",
                   help="sum of filter DFT magnitudes per chromatic class")
    p.add_argument("--weighted", action="store_true",
                   help="weight the Fourier sum by the final |B|")
    p.add_argument("--global-norm", action="store_true")
    _add_common(p, seed=False, fs=False)

    p = sub.add_parser("eval", help="correlate a metric with MOS over a manifest")
    p.add_argument("--manifest", required=True, metavar="CSV")
    p.add_argument("--metric", choices=("ppnet", "ssim"), default="ppnet")
    p.add_argument("--out", metavar="CSV", help="per-record report")
    _add_common(p, threads=True)

    p = sub.add_parser("consistency",
                       help="Monte Carlo database self-consistency bound")
    p.add_argument("--manifest", required=True, metavar="CSV")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out", metavar="CSV", help="per-trial correlation samples")
    _add_common(p, params=False, threads=True, fs=False)

    p = sub.add_parser("fit-scale",
                       help="fit the final per-channel scaling (exact gradient)")
    p.add_argument("--manifest", required=True, metavar="CSV")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--out", required=True, metavar="FILE",
                   help="fitted parameter file")
    p.add_argument("--report", metavar="CSV", help="fit report")
    _add_common(p, threads=True)

    p = sub.add_parser("fit-ladder",
                       help="finite-difference fit of the unfrozen layers")
    p.add_argument("--manifest", required=True, metavar="CSV")
    p.add_argument("--freeze", type=int, required=True, metavar="K",
                   help="freeze layers 1..K (0..8)")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--fd-step", type=float, default=1e-4)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--crop", type=int, help="center-crop images to this size")
    p.add_argument("--batch", type=int, help="fixed evaluation subset size")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--report", metavar="CSV")
    _add_common(p, threads=True)

    p = sub.add_parser("sweep", help="correlation of random initializations")
    p.add_argument("--manifest", required=True, metavar="CSV")
    p.add_argument("--n", type=int, required=True, help="number of draws")
    p.add_argument("--scale", type=float, default=1.0,
                   help="perturbation strength in [0, 1] (default 1)")
    p.add_argument("--out", metavar="PREFIX",
                   help="write PREFIX_samples.csv and PREFIX_hist.csv")
    _add_common(p, params=False, threads=True)

    p = sub.add_parser("convert-tid", help="TID2008/TID2013 tree -> manifest")
    p.add_argument("--tid-root", required=True)
    p.add_argument("--out", required=True, metavar="CSV")

    p = sub.add_parser("convert-kadid", help="KADID tree -> manifest")
    p.add_argument("--kadid-root", required=True)
    p.add_argument("--out", required=True, metavar="CSV")

    p = sub.add_parser("info", help="parameter counts of a model state")
    _add_common(p, seed=False, fs=False)

    return parser


def _cmd_init(args) -> int:
    state = build_bio_model(ModelConfig())
    save_params(state, args.out)
    print(args.out)
    return EXIT_OK


def _cmd_distance(args) -> int:
    state = _load_state(args)
    ref = load_image_as_tensor(args.ref, args.fs)
    dist = load_image_as_tensor(args.dist, args.fs)
    print(repr(perceptual_distance(state, ref, dist)))
    return EXIT_OK


def _cmd_respond(args) -> int:
    state = _load_state(args)
    img = load_image_as_tensor(args.image, args.fs)
    spec = RenderSpec(target="layer_taps", layer=args.layer, out_path=args.out,
                      normalization="global" if args.global_norm else "per-panel")
    for path in render_responses(state, img, spec):
        print(path)
    return EXIT_OK


def _cmd_kernels(args) -> int:
    state = _load_state(args)
    spec = RenderSpec(target="fourier_sum" if args.fourier else "kernels",
                      layer=args.layer, out_path=args.out,
                      normalization="global" if args.global_norm else "per-panel",
                      weighted=args.weighted)
    print(render_kernels(state, spec))
    return EXIT_OK


def _cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.metric == "ppnet":
        compiled = CompiledModel(_load_state(args))
        metric = lambda ref, dist: perceptual_distance(compiled, ref, dist)
    else:
        metric = lambda ref, dist: 1.0 - ssim(ref, dist)
    report = evaluate_dataset(metric, manifest, sampling_frequency=args.fs,
                              threads=args.threads)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["record", "distance", "mos"])
            for i, (d, m) in enumerate(zip(report.distances, report.mos)):
                writer.writerow([i, repr(float(d)), repr(float(m))])
    sys.stderr.write(report.summary())
    print(repr(report.pearson))
    return EXIT_OK


def _cmd_consistency(args) -> int:
    manifest = load_manifest(args.manifest)
    report = monte_carlo_rho_max(manifest, trials=args.trials, seed=args.seed,
                                 threads=args.threads)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "pearson"])
            for i, value in enumerate(report.samples):
                writer.writerow([i, repr(float(value))])
    sys.stderr.write(report.summary())
    print(repr(report.rho_max))
    return EXIT_OK


def _write_fit_report(path, report) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        writer.writerow(["iterations", report.iterations])
        writer.writerow(["initial_pearson", repr(report.initial_pearson)])
        writer.writerow(["final_pearson", repr(report.final_pearson)])
        writer.writerow(["wall_clock_s", repr(report.wall_clock)])
        writer.writerow(["seed", report.seed])
        for layer, delta in report.parameter_deltas.items():
            writer.writerow([f"delta_{layer}", repr(delta)])


def _cmd_fit_scale(args) -> int:
    state = _load_state(args)
    manifest = load_manifest(args.manifest)
    fitted, report = fit_final_scale(
        state, manifest, steps=args.steps, learning_rate=args.lr,
        seed=args.seed, sampling_frequency=args.fs, threads=args.threads)
    save_params(fitted, args.out)
    if args.report:
        _write_fit_report(args.report, report)
    sys.stderr.write(report.summary())
    print(repr(report.final_pearson))
    return EXIT_OK


def _cmd_fit_ladder(args) -> int:
    state = _load_state(args)
    manifest = load_manifest(args.manifest)
    fitted, report = fit_freeze_ladder(
        state, FreezeSpec.prefix(args.freeze), manifest, steps=args.steps,
        fd_step=args.fd_step, learning_rate=args.lr, seed=args.seed,
        sampling_frequency=args.fs, crop=args.crop, batch=args.batch,
        threads=args.threads)
    save_params(fitted, args.out)
    if args.report:
        _write_fit_report(args.report, report)
    sys.stderr.write(report.summary())
    print(repr(report.final_pearson))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    manifest = load_manifest(args.manifest)
    report = random_init_sweep(ModelConfig(), manifest, n_inits=args.n,
                               seed=args.seed, scale=args.scale,
                               sampling_frequency=args.fs, threads=args.threads)
    if args.out:
        with open(f"{args.out}_samples.csv", "w", encoding="utf-8",
                  newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["draw", "pearson"])
            for i, value in enumerate(report.samples):
                writer.writerow([i, repr(float(value))])
        with open(f"{args.out}_hist.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_left", "bin_right", "count"])
            for left, right, count in zip(report.bin_edges[:-1],
                                          report.bin_edges[1:], report.counts):
                writer.writerow([repr(float(left)), repr(float(right)), int(count)])
    sys.stderr.write(report.summary())
    print(repr(float(report.samples.mean())))
    return EXIT_OK


def _cmd_convert_tid(args) -> int:
    print(convert_tid(args.tid_root, args.out))
    return EXIT_OK


def _cmd_convert_kadid(args) -> int:
    print(convert_kadid(args.kadid_root, args.out))
    return EXIT_OK


def _cmd_info(args) -> int:
    counts = count_params(_load_state(args))
    for layer, n in counts.per_layer.items():
        print(f"{layer}: {n}")
    print(f"total: {counts.total}")
    print(f"nominal architecture total: {counts.nominal_total} "
          f"(V1 normalization budget differs by {counts.layer7_gap})")
    return EXIT_OK


_COMMANDS = {
    "init": _cmd_init,
    "distance": _cmd_distance,
    "respond": _cmd_respond,
    "kernels": _cmd_kernels,
    "eval": _cmd_eval,
    "consistency": _cmd_consistency,
    "fit-scale": _cmd_fit_scale,
    "fit-ladder": _cmd_fit_ladder,
    "sweep": _cmd_sweep,
    "convert-tid": _cmd_convert_tid,
    "convert-kadid": _cmd_convert_kadid,
    "info": _cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        sys.stderr.write(f"usage error: {e}\n")
        return EXIT_USAGE
    except (DataError, InputError, ConfigurationError, ParameterError) as e:
        sys.stderr.write(f"data error: {e}\n")
        return EXIT_DATA
    except NumericalError as e:
        sys.stderr.write(f"numerical failure: {e}\n")
        return EXIT_NUMERICAL
    except PpnetError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
