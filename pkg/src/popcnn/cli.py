"""``popcnn`` command line: synth, preprocess, gradient-profile, train, predict,
evaluate, plot.

Exit codes: 0 success, 2 missing input or IO failure, 3 validation or shape
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .config import RunConfig, load_config, resolve_seed
from .errors import ConfigError
from .evaluation import evaluate
from .pipeline import preprocess
from .pop_model import PopNetwork, build, predict
from .signal_model import (
    Dataset,
    NormStats,
    apply_normalization,
    load_sample_csv,
    read_manifest,
    truncate,
    write_dataset,
)
from .subsample import (
    SamplingSchedule,
    apply_schedule,
    build_schedule,
    dataset_gradient,
    per_sample_gradient,
)
from .synth_data import make_default_splits
from .training import repeated_runs, train, write_runs

log = logging.getLogger("popcnn")

EXIT_OK = 0
EXIT_IO = 2
EXIT_INVALID = 3


class ShapeError(ValueError):
    pass


def _config(args) -> RunConfig:
    cfg = resolve_seed(load_config(getattr(args, "config", None)), getattr(args, "seed", None))
    overrides = {}
    if getattr(args, "threshold_T", None) is not None:
        overrides["threshold_T"] = args.threshold_T
    if getattr(args, "neutral_half_width", None) is not None:
        overrides["neutral_half_width"] = args.neutral_half_width
    if getattr(args, "human_human_r", None) is not None:
        overrides["human_human_r"] = args.human_human_r
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    for k, v in overrides.items():
        log.info("override %s=%s", k, v)
    if getattr(args, "seed", None) is not None:
        log.info("override seed=%s", args.seed)
    return replace(cfg, **overrides)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = _out_dir(args.out)
    synth = replace(cfg.synth, midpoint=cfg.midpoint)
    parts = make_default_splits(synth, cfg.split_counts)
    full = Dataset(tuple(s for part in parts for s in part.samples))
    write_dataset(full, out, midpoint=cfg.midpoint)
    labels = np.array([s.label for s in full])
    sizes = "/".join(str(len(p.odor_ids())) for p in parts)
    print(f"wrote {len(full)} samples, odors {sizes} (train/essential_oils/novel), "
          f"labels [{labels.min():.3f}, {labels.max():.3f}] -> {out / 'manifest.csv'}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    ds = read_manifest(args.manifest, cfg.midpoint)
    try:
        processed, schedule = preprocess(ds, cfg.mode, cfg.keep_seconds, cfg.pop.width,
                                         cfg.threshold_T)
    except IndexError as exc:
        raise ShapeError(str(exc)) from None
    out = _out_dir(args.out)
    write_dataset(processed, out, midpoint=cfg.midpoint)
    schedule.save(out / "schedule.csv")
    m, w = processed.shape
    print(f"{cfg.mode}: {len(processed)} samples -> {m}x{w}; schedule of {len(schedule)} "
          f"columns; stats from {len(processed.split('train'))} training samples")
    return EXIT_OK


def cmd_gradient_profile(args) -> int:
    cfg = _config(args)
    ds = read_manifest(args.manifest, cfg.midpoint)
    mats = [s.matrix for s in ds.split("train")]
    if not mats:
        raise ShapeError("manifest has no training-split samples")
    if cfg.keep_seconds is not None:
        mats = [truncate(m, cfg.keep_seconds) for m in mats]
    profile = dataset_gradient(per_sample_gradient(m) for m in mats)
    schedule = build_schedule(profile, cfg.threshold_T)
    out = _out_dir(args.out)
    np.savetxt(out / "profile.csv", profile, fmt="%.17g")
    schedule.save(out / "schedule.csv")
    print(f"profile of {profile.size} steps from {len(mats)} samples; T={cfg.threshold_T:g} "
          f"selects {len(schedule)} columns")
    return EXIT_OK


def _check_width(cfg: RunConfig, data_shape) -> RunConfig:
    m, w = data_shape
    pop = cfg.pop
    if "sensors" in cfg.explicit and pop.sensors != m:
        raise ShapeError(f"sensors: config says {pop.sensors}, data has {m}")
    if "width" in cfg.explicit and pop.width != w:
        raise ShapeError(f"width: config says {pop.width}, data has {w}")
    return replace(cfg, pop=replace(pop, sensors=m, width=w))


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = read_manifest(args.manifest, cfg.midpoint)
    train_set = ds.split("train")
    if len(train_set) == 0:
        raise ShapeError("manifest has no training-split samples")
    cfg = _check_width(cfg, train_set.shape)
    lo, hi = min(s.matrix.min() for s in train_set), max(s.matrix.max() for s in train_set)
    if lo < 0 or hi > 1:
        log.warning("training inputs span [%g, %g], not [0, 1]; run preprocess first", lo, hi)
    out = _out_dir(args.out)
    if args.n_train_odors is not None:
        summary = repeated_runs(train_set, args.n_train_odors, args.runs, cfg.pop, cfg.train)
        write_runs(summary, out, cfg.train.seed)
        print(f"n_train_odors={summary.n_train_odors} runs={len(summary.correlations)} "
              f"mean_r={summary.mean:.4f} median_r={summary.median:.4f} std={summary.std:.4f}")
        return EXIT_OK
    val = ds.split(args.val_split) if args.val_split else None
    net = build(cfg.pop)
    net, history = train(net, train_set, val, cfg.train)
    net.save(out / "weights.popw")
    history.write_csv(out / "history.csv")
    print(f"trained {len(history)} epochs on {len(train_set)} samples; final loss "
          f"{history.loss[-1]:.6g}, lr {history.lr[-1]:g} -> {out / 'weights.popw'}")
    return EXIT_OK


def _verdict(value: float) -> str:
    if value > 0:
        return "pleasant"
    if value < 0:
        return "unpleasant"
    return "unpleasant-or-boundary"


def cmd_predict(args) -> int:
    net = PopNetwork.load(args.weights)
    matrix = load_sample_csv(args.sample)
    if args.schedule:
        matrix = apply_schedule(matrix, SamplingSchedule.load(args.schedule))
    if args.norm_stats:
        matrix = apply_normalization(matrix, NormStats.load(args.norm_stats))
    m, w = net.input_shape
    if matrix.shape[0] != m:
        raise ShapeError(f"sensors: network expects {m}, sample has {matrix.shape[0]}")
    if matrix.shape[1] != w:
        raise ShapeError(f"width: network expects {w}, sample has {matrix.shape[1]}")
    value = predict(net, matrix)
    print(f"{value:.10g} {_verdict(value)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    net = PopNetwork.load(args.weights)
    ds = read_manifest(args.manifest, cfg.midpoint).split(args.split)
    if len(ds) == 0:
        raise ShapeError(f"manifest has no samples in split {args.split!r}")
    if ds.shape != net.input_shape:
        m, w = ds.shape
        dim = "sensors" if m != net.input_shape[0] else "width"
        raise ShapeError(f"{dim}: network expects {net.input_shape}, data has {ds.shape}")
    report = evaluate(net, ds, cfg.human_human_r, cfg.neutral_half_width)
    report.write(_out_dir(args.out))
    print(report.summary_line())
    return EXIT_OK


def _read_table(path):
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise ShapeError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) if r[j] != "" else np.nan for r in body])
        except (ValueError, IndexError):
            raise ShapeError(f"{path}: malformed column {name!r}") from None
    return text, cols


def cmd_plot(args) -> int:
    text, cols = _read_table(args.input)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if {"prediction", "human_median"} <= cols.keys():
        fig, ax = plt.subplots(figsize=(5, 5))
        x, y = cols["human_median"], cols["prediction"]
        ax.scatter(x, y, s=18)
        lim = [min(x.min(), y.min()), max(x.max(), y.max())]
        ax.plot(lim, lim, lw=0.8, color="grey")
        ax.axhline(0, lw=0.5, color="k")
        ax.axvline(0, lw=0.5, color="k")
        ax.set_xlabel("human median pleasantness (centered)")
        ax.set_ylabel("predicted pleasantness")
        if x.size >= 2 and np.ptp(x) > 0 and np.ptp(y) > 0:
            ax.set_title(f"r = {np.corrcoef(x, y)[0, 1]:.4f}")
    elif {"n_train_odors", "mean_r"} <= cols.keys():
        order = np.argsort(cols["n_train_odors"])
        fig, ax = plt.subplots(figsize=(6, 4))
        n, mean = cols["n_train_odors"][order], cols["mean_r"][order]
        err = cols["std_r"][order] if "std_r" in cols else None
        ax.errorbar(n, mean, yerr=err, marker="o", capsize=3)
        ax.set_xlabel("training odors")
        ax.set_ylabel("validation correlation")
    elif {"epoch", "loss"} <= cols.keys():
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
        ax1.semilogy(cols["epoch"], cols["loss"])
        ax1.set_ylabel("training MSE")
        if "val_correlation" in cols and np.any(np.isfinite(cols["val_correlation"])):
            ax2.plot(cols["epoch"], cols["val_correlation"])
        ax2.set_ylabel("validation r")
        ax2.set_xlabel("epoch")
    else:
        raise ShapeError(f"{args.input}: unrecognised columns {sorted(cols)}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                         help="log progress to stderr")
    p = argparse.ArgumentParser(prog="popcnn", description=__doc__.split("\n")[0],
                                parents=[verbose])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[verbose])

    def common(sp, manifest=True, out=True):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, help="overrides config seed and $POP_SEED")
        if manifest:
            sp.add_argument("--manifest", required=True)
        if out:
            sp.add_argument("--out", required=True)

    sp = add("synth", help="write a synthetic 3-split dataset")
    common(sp, manifest=False)
    sp.set_defaults(func=cmd_synth)

    sp = add("preprocess", help="truncate, subsample, normalize")
    common(sp)
    sp.add_argument("--mode", choices=("uniform", "nonuniform"))
    sp.add_argument("--threshold-T", dest="threshold_T", type=float)
    sp.set_defaults(func=cmd_preprocess)

    sp = add("gradient-profile", help="averaged gradient and sampling schedule")
    common(sp)
    sp.add_argument("--threshold-T", dest="threshold_T", type=float)
    sp.set_defaults(func=cmd_gradient_profile)

    sp = add("train", help="train on the training split")
    common(sp)
    sp.add_argument("--val-split", choices=("essential_oils", "novel"),
                    help="track validation correlation on this split each epoch")
    sp.add_argument("--n-train-odors", dest="n_train_odors", type=int,
                    help="repeated random odor splits instead of a single fit")
    sp.add_argument("--runs", type=int, default=20)
    sp.set_defaults(func=cmd_train)

    sp = add("predict", help="predict one sample CSV")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--sample", required=True)
    sp.add_argument("--schedule", help="column indices to select first")
    sp.add_argument("--norm-stats", dest="norm_stats", help="normalize with these stats")
    sp.set_defaults(func=cmd_predict)

    sp = add("evaluate", help="report correlation and binary accuracy")
    common(sp)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--split", default="essential_oils",
                    choices=("train", "essential_oils", "novel"))
    sp.add_argument("--human-human-r", dest="human_human_r", type=float)
    sp.add_argument("--neutral-half-width", dest="neutral_half_width", type=float)
    sp.set_defaults(func=cmd_evaluate)

    sp = add("plot", help="SVG chart from a history, scatter or summary CSV")
    sp.add_argument("input")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_plot)
    return p


def _setup_logging(verbose: bool) -> None:
    root = logging.getLogger("popcnn")
    for h in [h for h in root.handlers if getattr(h, "_popcnn_cli", False)]:
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    handler._popcnn_cli = True
    root.addHandler(handler)
    root.setLevel(logging.INFO if verbose else logging.WARNING)
    root.propagate = False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(getattr(args, "verbose", False))
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, IndexError, ConfigError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
