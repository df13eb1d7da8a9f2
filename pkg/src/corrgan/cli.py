"""Command-line pipeline: sample, build datasets, train, generate, repair,
evaluate, and serve the discrimination game.

Exit codes: 0 success; 1 runtime domain failure (divergence, non-convergence,
degenerate data); 2 usage errors the parser rejects (unknown subcommand or
flag), with usage text; 3 well-formed flags whose values violate a module's
config invariants; 4 OS-level I/O failures.  Errors print exactly one
machine-parseable line `error: <kind>: <message>` on stderr.

Every run writes a `run-manifest` (full flag set plus seed) under its output
directory, from which the run is exactly reproducible.  All randomness flows
from the single --seed, fanned out to stages by fixed label derivation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import matio
from .canonical import canonicalize
from .core import CorrelationMatrix, CorrganError, StructuralError
from .facts import FactThresholds, dump_histograms, render_report, stylized_report
from .gan import (
    TrainConfig,
    conv_architecture,
    dense_architecture,
    generate,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .ingest import FactorMarketParams, build_dataset, load_returns_csv, synth_factor_market
from .repair import RepairConfig, nearest_correlation_detailed
from .rng import derive_seed
from .sampling import SamplerConfig, sample_onion
from .service import ServiceConfig, create_app_from_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_BAD_CONFIG = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}".rstrip())


def _int_tuple(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}") from exc


def build_parser() -> _Parser:
    p = _Parser(prog="corrgan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", metavar="subcommand")

    def cmd(name, help_text):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
        return c

    c = cmd("sample-elliptope", "uniform correlation matrices via the onion method")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--count", type=int, required=True)
    c.add_argument("--out", required=True)

    c = cmd("build-dataset", "rolling-window / sub-universe correlation dataset")
    c.add_argument("--out", required=True)
    c.add_argument("--source", choices=("synthetic", "csv"), default="synthetic")
    c.add_argument("--returns-csv", help="returns panel (required for --source csv)")
    c.add_argument("--count", type=int, default=100)
    c.add_argument("--window", type=int, default=252)
    c.add_argument("--stride", type=int, default=None)
    c.add_argument("--universe-size", type=int, default=20)
    c.add_argument("--assets", type=int, default=20, help="synthetic market width")
    c.add_argument("--days", type=int, default=504, help="synthetic market length")
    c.add_argument("--sectors", type=int, default=4)

    c = cmd("canonicalize", "rewrite matrices as canonical representatives")
    c.add_argument("--in", dest="in_dir", required=True)
    c.add_argument("--out", required=True)

    c = cmd("train", "fit the generative model on a matrix directory")
    c.add_argument("--data", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--arch", choices=("dense", "conv"), default="dense")
    c.add_argument("--latent", type=int, default=32)
    c.add_argument("--gen-widths", type=_int_tuple, default=(128, 128))
    c.add_argument("--disc-widths", type=_int_tuple, default=(128, 128))
    c.add_argument("--gen-channels", type=_int_tuple, default=(64, 32))
    c.add_argument("--disc-channels", type=_int_tuple, default=(32, 64))
    c.add_argument("--epochs", type=int, default=150)
    c.add_argument("--batch-size", type=int, default=64)
    c.add_argument("--lr-gen", type=float, default=2e-4)
    c.add_argument("--lr-disc", type=float, default=2e-4)
    c.add_argument("--checkpoint-every", type=int, default=0, help="epochs between snapshots")

    c = cmd("generate", "sample raw matrices from a trained model")
    c.add_argument("--model", required=True)
    c.add_argument("--count", type=int, required=True)
    c.add_argument("--out", required=True)

    c = cmd("repair", "project raw matrices to nearest correlation matrices")
    c.add_argument("--in", dest="in_dir", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--tol", type=float, default=1e-7)
    c.add_argument("--max-iter", type=int, default=200)

    c = cmd("evaluate", "stylized-facts report: reference vs candidate")
    c.add_argument("--reference", required=True)
    c.add_argument("--candidate", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--reference-days", type=int, default=252)

    c = cmd("serve", "run the discrimination-game HTTP service")
    c.add_argument("--real-dir", required=True)
    c.add_argument("--fake-dir", required=True)
    c.add_argument("--port", type=int, default=8000)
    c.add_argument("--host", default="127.0.0.1")
    c.add_argument("--log-file", required=True)
    c.add_argument("--ttl", type=float, default=3600.0)
    c.add_argument("--static-dir", default=None)
    return p


def _write_run_manifest(directory, args) -> None:
    entries = [("subcommand", args.subcommand)]
    skip = {"subcommand", "func"}
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None:
            continue
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        entries.append((key.replace("_", "-"), value))
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    matio.write_manifest(directory / "run-manifest", entries)


def _load_dir_arrays(directory) -> list:
    return matio.load_matrix_dir(directory)


def _load_dir_matrices(directory) -> list:
    return [CorrelationMatrix.from_values(v) for v in matio.load_matrix_dir(directory)]


# ---------------------------------------------------------------- commands


def _cmd_sample_elliptope(args) -> int:
    mats = sample_onion(SamplerConfig(n=args.n, count=args.count, seed=args.seed))
    _write_run_manifest(args.out, args)
    matio.write_matrix_dir(
        args.out,
        [m.values for m in mats],
        manifest_extra=[("source", "elliptope-onion"), ("n", args.n), ("seed", args.seed)],
    )
    print(f"wrote {len(mats)} matrices to {args.out}")
    return EXIT_OK


def _cmd_build_dataset(args) -> int:
    if args.source == "csv":
        if not args.returns_csv:
            raise StructuralError("--returns-csv is required with --source csv")
        panel = load_returns_csv(args.returns_csv).panel
        source = "returns-csv"
    else:
        params = FactorMarketParams(
            n_assets=args.assets,
            n_days=args.days,
            n_sectors=args.sectors,
            seed=derive_seed(args.seed, "market"),
        )
        panel = synth_factor_market(params)
        source = "synthetic-factor"
    _write_run_manifest(args.out, args)
    man = build_dataset(
        panel,
        args.out,
        window=args.window,
        stride=args.stride,
        universe_size=args.universe_size,
        target_count=args.count,
        seed=derive_seed(args.seed, "draws"),
        source=source,
    )
    print(f"wrote {man.matrix_count} matrices to {args.out}")
    return EXIT_OK


def _cmd_canonicalize(args) -> int:
    mats = [canonicalize(m) for m in _load_dir_matrices(args.in_dir)]
    _write_run_manifest(args.out, args)
    matio.write_matrix_dir(
        args.out,
        [m.values for m in mats],
        manifest_extra=[("source", "canonicalized"), ("canonicalized", "true")],
    )
    print(f"canonicalized {len(mats)} matrices to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    data = _load_dir_arrays(args.data)
    if not data:
        raise StructuralError(f"no matrices under {args.data}")
    n = data[0].shape[0]
    if args.arch == "conv":
        arch = conv_architecture(
            n,
            latent_dim=args.latent,
            gen_channels=args.gen_channels,
            disc_channels=args.disc_channels,
        )
    else:
        arch = dense_architecture(
            n,
            latent_dim=args.latent,
            gen_widths=args.gen_widths,
            disc_widths=args.disc_widths,
        )
    out = Path(args.out)
    _write_run_manifest(out, args)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr_gen=args.lr_gen,
        lr_disc=args.lr_disc,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        checkpoint_dir=str(out / "checkpoints") if args.checkpoint_every else None,
    )
    start = time.time()
    model, log = train(data, arch, cfg)
    save_checkpoint(out / "model.ckpt", model)
    per_epoch = log.steps // len(log.epoch_seconds)
    with open(out / "training-log.csv", "w") as fh:
        fh.write("epoch,disc_loss,gen_loss,d_real,d_fake,seconds\n")
        for e, secs in enumerate(log.epoch_seconds):
            sl = slice(e * per_epoch, (e + 1) * per_epoch)

            def mean(xs):
                chunk = xs[sl]
                return sum(chunk) / len(chunk)

            fh.write(
                f"{e + 1},{mean(log.disc_loss):.6g},{mean(log.gen_loss):.6g},"
                f"{mean(log.d_real):.6g},{mean(log.d_fake):.6g},{secs:.3f}\n"
            )
    print(
        f"trained {args.arch} n={n} for {args.epochs} epochs "
        f"in {time.time() - start:.1f}s -> {out / 'model.ckpt'}"
    )
    return EXIT_OK


def _cmd_generate(args) -> int:
    model = load_checkpoint(args.model)
    mats = generate(model, args.count, args.seed)
    _write_run_manifest(args.out, args)
    matio.write_matrix_dir(
        args.out,
        [m.values for m in mats],
        manifest_extra=[("source", "generated-raw"), ("model", str(args.model))],
    )
    print(f"generated {len(mats)} raw matrices to {args.out}")
    return EXIT_OK


def _cmd_repair(args) -> int:
    raws = _load_dir_arrays(args.in_dir)
    if not raws:
        raise StructuralError(f"no matrices under {args.in_dir}")
    cfg = RepairConfig(tol=args.tol, max_iter=args.max_iter)
    _write_run_manifest(args.out, args)
    repaired = []
    worst = 0
    for arr in raws:
        fixed, diag = nearest_correlation_detailed(arr, cfg)
        worst = max(worst, diag.iterations)
        repaired.append(fixed.values)
    matio.write_matrix_dir(
        args.out,
        repaired,
        manifest_extra=[("source", "repaired"), ("tol", args.tol)],
    )
    print(f"repaired {len(repaired)} matrices (max {worst} iterations) to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    reference = _load_dir_matrices(args.reference)
    candidate = _load_dir_matrices(args.candidate)
    thresholds = FactThresholds(reference_days=args.reference_days)
    report = stylized_report(reference, candidate, thresholds)
    out = Path(args.out)
    _write_run_manifest(out, args)
    text = render_report(report)
    (out / "report.txt").write_text(text)
    dump_histograms(report, out / "histograms")
    print(f"report -> {out / 'report.txt'}")
    print(f"verdicts.all = {'pass' if report.all_pass else 'fail'}")
    return EXIT_OK


def serve_runner(app, host: str, port: int) -> None:  # replaced in tests
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")


def _cmd_serve(args) -> int:
    cfg = ServiceConfig(
        real_dir=args.real_dir,
        fake_dir=args.fake_dir,
        log_file=args.log_file,
        seed=args.seed,
        ttl_seconds=args.ttl,
        static_dir=args.static_dir,
    )
    app = create_app_from_config(cfg)
    _write_run_manifest(Path(args.log_file).parent, args)
    print(f"serving on {args.host}:{args.port}")
    serve_runner(app, args.host, args.port)
    return EXIT_OK


_COMMANDS = {
    "sample-elliptope": _cmd_sample_elliptope,
    "build-dataset": _cmd_build_dataset,
    "canonicalize": _cmd_canonicalize,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "repair": _cmd_repair,
    "evaluate": _cmd_evaluate,
    "serve": _cmd_serve,
}


def _configure_logging() -> None:
    level_name = os.environ.get("CORRGAN_LOG", "warning").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    logging.getLogger("corrgan").setLevel(level)


def run(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not args.subcommand:
        print(f"error: usage: a subcommand is required\n{parser.format_usage()}".rstrip(),
              file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.subcommand](args)
    except StructuralError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO
    except CorrganError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
