"""Command-line entry point: ``srvfnet <subcommand> [flags]``.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
Options may also come from ``--config FILE`` (``key = value`` lines using the
flag names without dashes); flags given on the command line win.
"""
import argparse
import contextlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import network
from .data import BumpSpec, generate_bumps, load_profiles_csv, save_dataset, write_manifest
from .diffeo import PiConfig, warp_srvf
from .elastic import DpConfig, dp_align, dp_align_many, karcher_mean
from .exceptions import (CsvFormatError, DegenerateInputError, DimensionError, NumericError,
                         PreconditionError)
from .functional import from_srvf, grid, l2_norm
from .io import load_checkpoint, read_config, read_rows, write_json, write_rows, write_train_log
from .losses import LossWeights, fr_loss
from .svg import write_svg
from .training import FIXED, TEMPLATE, TrainConfig, evaluate, train

log = logging.getLogger("srvfnet")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

# flag -> (type, default); None defaults are resolved per command
OPTIONS = {
    "epochs": (int, 100),
    "latent-dim": (int, 150),
    "batch-size": (int, 512),
    "lr": (float, 1e-3),
    "lambda-fr": (float, 1.0),
    "lambda-kl": (float, 1e-2),
    "lambda-grad": (float, 1e-3),
    "lambda-grad2": (float, 1e-4),
    "tsmooth": (int, None),
    "checkpoint-every": (int, 0),
    "slope-window": (int, 3),
    "max-iter": (int, 50),
    "tol": (float, 1e-4),
    "n": (int, None),
    "test-n": (int, 200),
    "peaks": (int, 2),
    "template-peaks": (int, None),
    "length": (int, 100),
    "seed": (int, None),
    "workers": (int, 1),
}
FLAGS = ("deterministic", "oracle", "header", "no-smooth", "stop-template-grad")
PATHS = ("data", "template", "test-data", "checkpoint", "warped", "warps", "out")


class UsageError(Exception):
    pass


def _parser():
    p = argparse.ArgumentParser(prog="srvfnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": "generate a synthetic bump corpus (train/test CSV + template)",
        "train-fixed": "train against a fixed template",
        "train-template": "train while predicting the template",
        "align-pair": "DP alignment of one function to a template",
        "karcher-mean": "iterative DP Karcher mean of a corpus",
        "sample-warps": "decode warps drawn from the latent prior",
        "eval": "apply a trained model to a corpus",
        "export-plots": "write an SVG of original / warped / warp curves",
    }
    for name, help_ in commands.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config")
        for path in PATHS:
            sp.add_argument(f"--{path}")
        for opt, (typ, _) in OPTIONS.items():
            sp.add_argument(f"--{opt}", type=typ, default=None)
        for flag in FLAGS:
            sp.add_argument(f"--{flag}", action="store_true", default=None)
        sp.add_argument("--title")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _resolve(args):
    """Merge config file values under command-line flags, then apply defaults."""
    opts = vars(args).copy()
    if args.config:
        for key, value in read_config(args.config).items():
            attr = key.replace("-", "_")
            if attr not in opts:
                raise UsageError(f"unknown config key {key!r}")
            if opts[attr] is not None:
                continue
            if key in OPTIONS:
                opts[attr] = OPTIONS[key][0](value)
            elif key in FLAGS:
                opts[attr] = value.lower() in ("1", "true", "yes", "on")
            else:
                opts[attr] = value
    for opt, (_, default) in OPTIONS.items():
        attr = opt.replace("-", "_")
        if opts[attr] is None:
            opts[attr] = default
    for flag in FLAGS:
        attr = flag.replace("-", "_")
        opts[attr] = bool(opts[attr])
    if opts["seed"] is None:
        opts["seed"] = int(np.random.SeedSequence().entropy % 2**31)
    return argparse.Namespace(**opts)


def _require(args, *names):
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            raise UsageError(f"--{name} is required")


def _out_dir(args):
    _require(args, "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(path, args, T=None):
    ds = load_profiles_csv(path, T=T, header=args.header)
    if len(ds) == 0:
        raise UsageError(f"{path}: no usable functions")
    if ds.excluded:
        log.warning("%s: excluded constant rows %s", path, ds.excluded)
    return ds


def _template_srvf(path, args, T):
    ds = _load(path, args, T)
    return ds.srvfs[0]


def _train_config(args, regime, template):
    return TrainConfig(
        batch_size=args.batch_size, learning_rate=args.lr, epochs=args.epochs, latent_dim=args.latent_dim,
        tsmooth=args.tsmooth, smooth=not args.no_smooth,
        weights=LossWeights(args.lambda_fr, args.lambda_kl, args.lambda_grad, args.lambda_grad2),
        seed=args.seed, regime=regime, template=template, checkpoint_every=args.checkpoint_every,
        stop_template_grad=args.stop_template_grad,
    )


def _summary_stats(x):
    x = np.asarray(x, dtype=float)
    return {"mean": float(x.mean()), "median": float(np.median(x))}


def cmd_gen_data(args):
    out = _out_dir(args)
    n = args.n if args.n is not None else 2000
    train_ds = generate_bumps(BumpSpec(args.peaks, T=args.length, seed=args.seed), n)
    test_ds = generate_bumps(BumpSpec(args.peaks, T=args.length, seed=args.seed + 1), args.test_n)
    template = generate_bumps(BumpSpec(args.template_peaks or args.peaks, T=args.length, seed=args.seed + 2), 1)
    save_dataset(out / "train.csv", train_ds)
    save_dataset(out / "test.csv", test_ds)
    save_dataset(out / "template.csv", template)
    write_manifest(out / "manifest.json", train_ds)
    write_json(out / "summary.json", {"seed": args.seed, "train": n, "test": args.test_n, "T": args.length})


def _run_training(args, regime):
    _require(args, "data")
    out = _out_dir(args)
    data = _load(args.data, args)
    T = data.T
    template = None
    if regime == FIXED:
        if args.template is None:
            raise UsageError("--template is required for train-fixed")
        template = _template_srvf(args.template, args, T)
    cfg = _train_config(args, regime, template)
    report = train(data.srvfs, cfg, checkpoint_path=out / "checkpoint.json")
    write_train_log(out / "train_log.csv", report)
    final = {k: v[-1] for k, v in report.traces.items()} if report.epochs else dict(report.initial)
    summary = {"seed": args.seed, "regime": regime, "epochs": report.epochs, "n_train": len(data),
               "excluded_rows": data.excluded, "initial": report.initial, "final": final,
               "wallclock_seconds": report.wallclock[-1] if report.wallclock else 0.0}
    if regime == TEMPLATE:
        write_rows(out / "template_srvf.csv", report.template)
        write_rows(out / "template.csv", from_srvf(report.template))
    if args.test_data:
        test = _load(args.test_data, args, T)
        test_cfg = _train_config(args, FIXED, report.template)
        _, breakdown, _ = evaluate(report.params, test.srvfs, test_cfg)
        summary["test"] = breakdown
    write_json(out / "summary.json", summary)


def cmd_align_pair(args):
    _require(args, "data")
    out = _out_dir(args)
    ds = _load(args.data, args)
    if args.template:
        target = _template_srvf(args.template, args, ds.T)
    elif len(ds) >= 2:
        target = ds.srvfs[1]
    else:
        raise UsageError("need --template or a second row in --data")
    q = ds.srvfs[0]
    gamma, cost = dp_align(target, q, DpConfig(args.slope_window))
    write_rows(out / "gamma.csv", gamma)
    write_rows(out / "warped.csv", warp_srvf(q, gamma))
    unaligned = float(fr_loss(q, grid(ds.T), target))
    write_json(out / "summary.json", {"cost": cost, "unaligned_cost": unaligned})


def cmd_karcher_mean(args):
    _require(args, "data")
    out = _out_dir(args)
    ds = _load(args.data, args)
    res = karcher_mean(ds.srvfs, DpConfig(args.slope_window), args.max_iter, args.tol, args.workers)
    write_rows(out / "mean_srvf.csv", res.mean)
    write_rows(out / "mean_function.csv", from_srvf(res.mean))
    write_rows(out / "warps.csv", res.warps)
    write_rows(out / "warped.csv", warp_srvf(ds.srvfs, res.warps))
    write_rows(out / "trace.csv", np.asarray(res.objective_trace)[:, None])
    write_json(out / "summary.json", {"iterations": res.n_iter, "converged": res.converged,
                                      "objective_trace": res.objective_trace})


def _model(args):
    _require(args, "checkpoint")
    params, doc = load_checkpoint(args.checkpoint)
    dims = doc["dims"]
    pi_cfg = PiConfig(params.T, args.tsmooth or dims.get("tsmooth"), smooth=dims.get("smooth", True))
    return params, doc, pi_cfg


def cmd_sample_warps(args):
    out = _out_dir(args)
    params, _, pi_cfg = _model(args)
    n = args.n if args.n is not None else 200
    warps = network.sample_warps(params, n, pi_cfg, np.random.default_rng(args.seed))
    write_rows(out / "warps.csv", warps)
    lo, hi = np.percentile(warps, [5, 95], axis=0)
    write_json(out / "summary.json", {"seed": args.seed, "n": n,
                                      "band_monotone": bool(np.all(np.diff(lo) >= 0) and np.all(np.diff(hi) >= 0))})


def cmd_eval(args):
    _require(args, "data")
    out = _out_dir(args)
    params, doc, pi_cfg = _model(args)
    ds = _load(args.data, args)
    if ds.T != params.T:
        raise UsageError(f"data length {ds.T} does not match checkpoint T={params.T}")
    if args.template:
        template = _template_srvf(args.template, args, ds.T)
    elif doc.get("template") is not None:
        template = doc["template"]
    else:
        raise UsageError("checkpoint has no template; pass --template")
    Q = ds.srvfs
    gammas = network.predict_warps(params, Q, pi_cfg)
    warped = warp_srvf(Q, gammas)
    before = fr_loss(Q, np.broadcast_to(grid(ds.T), Q.shape), template)
    after = fr_loss(Q, gammas, template)
    write_rows(out / "gammas.csv", gammas)
    write_rows(out / "warped.csv", warped)
    columns = [before, after]
    summary = {"n": len(ds), "before": _summary_stats(before), "after": _summary_stats(after),
               "warped_norm_max_deviation": float(np.max(np.abs(l2_norm(warped) - 1.0)))}
    if args.oracle:
        _, oracle = dp_align_many(template, Q, DpConfig(args.slope_window), args.workers)
        columns.append(oracle)
        summary["oracle"] = _summary_stats(oracle)
        summary["ratio_to_oracle"] = float(after.mean() / oracle.mean())
    write_rows(out / "costs.csv", np.column_stack(columns),
               header=["before", "after", "oracle"][: len(columns)])
    write_json(out / "summary.json", summary)


def cmd_export_plots(args):
    _require(args, "data", "out")
    panels = [("original", _rows(args.data, args), None)]
    template = None
    if args.template:
        template = _rows(args.template, args)[0]
        panels[0] = ("original", panels[0][1], template)
    if args.warped:
        panels.append(("warped", _rows(args.warped, args), template))
    if args.warps:
        panels.append(("warps", _rows(args.warps, args), None))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_svg(args.out, panels, args.title)


def _rows(path, args):
    rows = read_rows(path, header=args.header)
    if len(rows) == 0:
        raise UsageError(f"{path}: no rows")
    return rows


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-fixed": lambda a: _run_training(a, FIXED),
    "train-template": lambda a: _run_training(a, TEMPLATE),
    "align-pair": cmd_align_pair,
    "karcher-mean": cmd_karcher_mean,
    "sample-warps": cmd_sample_warps,
    "eval": cmd_eval,
    "export-plots": cmd_export_plots,
}


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _resolve(args)
        limits = contextlib.nullcontext()
        if args.deterministic:
            from threadpoolctl import threadpool_limits
            limits = threadpool_limits(1)
            args.workers = 1
        with limits:
            COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"srvfnet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, CsvFormatError, DimensionError, PreconditionError, DegenerateInputError,
            FileNotFoundError, ValueError) as exc:
        print(f"srvfnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
