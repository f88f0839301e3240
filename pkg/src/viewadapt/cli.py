"""Command-line entry point: ``viewadapt {synth,train,eval,gradcheck,transform,bench}``.

Exit codes: 0 success, 1 usage/config error, 2 I/O or parse error,
3 numeric divergence, 4 gradient check failure.
"""

import argparse
from dataclasses import fields, replace
import logging
import os
import sys

import numpy as np

from . import checkpoint, formats, gradcheck, synth
from . import model as va
from .nn import TrainingDiverged

log = logging.getLogger("viewadapt")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 1, 2, 3, 4

CHECKPOINT_NAME = "model.vask"
METRICS_NAME = "metrics.tsv"


class UsageError(Exception):
    pass


# -- run configuration ------------------------------------------------------------

_TRAIN_KEYS = {f.name: f for f in fields(va.TrainConfig)}
RUN_KEYS = {"train_data": None, "test_data": None, "out": "run"}


def _coerce(name, raw):
    f = _TRAIN_KEYS[name]
    default = f.default
    if name == "branch_hidden":
        return None if raw.lower() in ("", "none") else int(raw)
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_run_config(text):
    """Parse ``key = value`` lines into ``(TrainConfig, run_options)``."""
    train_kw = {}
    run = dict(RUN_KEYS)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep or not key:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        if key in _TRAIN_KEYS:
            try:
                train_kw[key] = _coerce(key, value)
            except ValueError as exc:
                raise UsageError(f"config line {lineno}: {key}: {exc}") from None
        elif key in RUN_KEYS:
            run[key] = value
        else:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
    try:
        return va.TrainConfig(**train_kw), run
    except ValueError as exc:
        raise UsageError(f"config: {exc}") from None


def _config_help():
    lines = [f"  {k} = {f.default!r}" for k, f in _TRAIN_KEYS.items()]
    lines += [f"  {k} = {v!r}" for k, v in RUN_KEYS.items()]
    return "run-config keys and defaults:\n" + "\n".join(lines)


# -- commands -----------------------------------------------------------------------

def cmd_synth(args):
    if min(args.classes, args.per_class, args.frames, args.joints) < 1:
        raise UsageError("--classes, --per-class, --frames and --joints must be positive")
    if args.joints < 4:
        raise UsageError("--joints must be at least 4")
    test_per = args.test_per_class if args.test_per_class is not None else args.per_class // 3
    if not 0 <= test_per < args.per_class:
        raise UsageError("--test-per-class must be smaller than --per-class")
    out = args.out or "data"
    train, test, views = synth.generate_dataset(
        args.classes, args.per_class, args.frames, args.joints, args.seed or 0,
        test_per_class=test_per, noise=args.noise, view_scale=args.view_scale)
    os.makedirs(out, exist_ok=True)
    formats.save_native(train, os.path.join(out, "train.vaskel"))
    if test is not None:
        formats.save_native(test, os.path.join(out, "test.vaskel"))
    with open(os.path.join(out, "views.tsv"), "w", encoding="utf-8") as f:
        f.write("split\tindex\tlabel\talpha\tbeta\tgamma\tdx\tdy\tdz\tdrift\n")
        for split, idx, label, v in views:
            vals = "\t".join("%.9g" % x for x in (*v.angles, *v.d, v.drift))
            f.write(f"{split}\t{idx}\t{label}\t{vals}\n")
    print(f"wrote {len(train)} train / {len(test) if test else 0} test sequences to {out}")
    return EXIT_OK


def _load_config(args):
    if not args.config:
        raise UsageError("train needs --config FILE")
    try:
        with open(args.config, encoding="utf-8") as f:
            cfg, run = parse_run_config(f.read())
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        run["out"] = args.out
    if not run["train_data"]:
        raise UsageError("config must set train_data")
    base = os.path.dirname(os.path.abspath(args.config))
    for k in ("train_data", "test_data"):
        if run[k]:
            run[k] = os.path.join(base, run[k])
    return cfg, run


def cmd_train(args):
    cfg, run = _load_config(args)
    train_set = formats.read_native(run["train_data"])
    rng = np.random.default_rng(cfg.seed)
    model = va.init_model(cfg, train_set.num_joints, train_set.num_classes, rng)
    os.makedirs(run["out"], exist_ok=True)
    metrics_path = os.path.join(run["out"], METRICS_NAME)
    with open(metrics_path, "w", encoding="utf-8") as mf:
        def log_epoch(epoch, loss, acc):
            mf.write(f"{epoch}\t{loss:.9g}\t{acc:.9g}\n")
            log.info("epoch %d loss %.4f acc %.3f", epoch, loss, acc)

        model, adam, metrics = va.train(model, train_set, cfg, rng, log=log_epoch)
    ckpt = os.path.join(run["out"], CHECKPOINT_NAME)
    checkpoint.save_checkpoint(model, ckpt, adam)
    if args.plot and metrics:
        from .plotting import plot_metrics
        plot_metrics(metrics, os.path.join(run["out"], "metrics.png"))
    print(f"checkpoint: {ckpt}")
    if run["test_data"]:
        acc, _ = va.evaluate(model, formats.read_native(run["test_data"], split="test"))
        print(f"test accuracy: {acc:.3f}")
    return EXIT_OK


def cmd_eval(args):
    model, _ = checkpoint.load_checkpoint(args.checkpoint)
    data = formats.read_native(args.dataset, split="test")
    if data.num_classes > model.num_classes or data.num_joints != model.num_joints:
        raise UsageError("dataset does not match the checkpoint's joints/classes")
    acc, conf = va.evaluate(model, data)
    print(f"accuracy\t{acc:.3f}")
    for row in conf:
        print("\t".join(str(int(x)) for x in row))
    return EXIT_OK


def cmd_gradcheck(args):
    report = gradcheck.run(args.seed or 0, args.joints, args.frames, args.hidden,
                           args.classes, corrupt=args.corrupt)
    ok = True
    for name, err in report.items():
        status = "ok" if err < gradcheck.TOLERANCE else "FAIL"
        ok &= status == "ok"
        print(f"{name}\t{err:.3e}\t{status}")
    worst = max(report.values())
    print(f"{'PASS' if ok else 'FAIL'}\tmax relative error {worst:.3e} "
          f"(tolerance {gradcheck.TOLERANCE:g})")
    return EXIT_OK if ok else EXIT_GRADCHECK


def write_transform_dump(model, dataset, f):
    n = 0
    for sid, seq in enumerate(dataset):
        for t, ang, d, Vp in va.transform_dump(model, seq):
            nums = " ".join("%.9g" % x for x in Vp.ravel())
            head = "\t".join("%.9g" % x for x in (*ang, *d))
            f.write(f"{sid}\t{t}\t{head}\t{nums}\n")
            n += 1
    return n


def read_transform_dump(path):
    """Parse a dump back into ``{seq_id: (T, J, 3) array}``."""
    frames = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 9:
                raise formats.ParseError("expected 9 tab-separated fields", lineno)
            xyz = np.array(parts[8].split(" "), dtype=float).reshape(-1, 3)
            frames.setdefault(int(parts[0]), []).append((int(parts[1]), xyz))
    return {k: np.stack([x for _, x in sorted(v, key=lambda p: p[0])]) for k, v in frames.items()}


def cmd_transform(args):
    model, _ = checkpoint.load_checkpoint(args.checkpoint)
    data = formats.read_native(args.dataset)
    if data.num_joints != model.num_joints:
        raise UsageError("dataset joint count does not match the checkpoint")
    out = args.out or "transform.tsv"
    with open(out, "w", encoding="utf-8") as f:
        n = write_transform_dump(model, data, f)
    print(f"wrote {n} frame records to {out}")
    if args.plot:
        from .plotting import plot_views
        pick = data.sequences[: args.plot_count]
        plot_views([s.joints for s in pick], [va.transformed_joints(model, s) for s in pick],
                   args.plot, title="input vs learned observation viewpoint")
        print(f"figure: {args.plot}")
    return EXIT_OK


def cmd_bench(args):
    tcfg = va.TrainConfig(hidden=args.hidden, batch_size=args.batch_size, epochs=args.epochs)
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            tcfg, _ = parse_run_config(f.read())
    cfg = synth.BenchConfig(view_scale=args.view_scale, train=tcfg, workers=args.workers)
    seed = args.seed if args.seed is not None else 0
    rows = synth.run_ablation(cfg, seed)
    out = args.out or "bench"
    os.makedirs(out, exist_ok=True)
    table = synth.format_table(rows)
    with open(os.path.join(out, "results.tsv"), "w", encoding="utf-8") as f:
        f.write(table)
    sys.stdout.write(table)
    from .plotting import plot_ablation
    plot_ablation(rows, os.path.join(out, "ablation.png"))
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(default):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default, help="random seed")
    common.add_argument("--config", default=default, help="key = value run configuration file")
    common.add_argument("--out", default=default, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true", default=default or False)
    return common


def build_parser():
    # subcommands must not reset flags given before the subcommand name
    common = _global_flags(argparse.SUPPRESS)
    p = _Parser(prog="viewadapt", description=__doc__, parents=[_global_flags(None)],
                formatter_class=argparse.RawDescriptionHelpFormatter, epilog=_config_help())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic multi-view dataset")
    s.add_argument("--classes", type=int, default=5)
    s.add_argument("--per-class", type=int, default=60)
    s.add_argument("--test-per-class", type=int, default=None)
    s.add_argument("--frames", type=int, default=30)
    s.add_argument("--joints", type=int, default=15)
    s.add_argument("--noise", type=float, default=0.01)
    s.add_argument("--view-scale", type=float, default=1.0,
                   help="0 gives single-view data")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], help="train from a run config",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog=_config_help())
    t.add_argument("--plot", action="store_true", help="also write metrics.png")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="accuracy and confusion matrix")
    e.add_argument("checkpoint")
    e.add_argument("dataset")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    g.add_argument("--joints", type=int, default=5)
    g.add_argument("--frames", type=int, default=4)
    g.add_argument("--hidden", type=int, default=8)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    x = sub.add_parser("transform", parents=[common], help="dump per-frame viewpoints")
    x.add_argument("checkpoint")
    x.add_argument("dataset")
    x.add_argument("--plot", default=None, metavar="PNG", help="render input vs observed skeletons")
    x.add_argument("--plot-count", type=int, default=4)
    x.set_defaults(func=cmd_transform)

    b = sub.add_parser("bench", parents=[common], help="synthetic ablation over all modes")
    b.add_argument("--hidden", type=int, default=synth.BenchConfig().train.hidden)
    b.add_argument("--batch-size", type=int, default=synth.BenchConfig().train.batch_size)
    b.add_argument("--epochs", type=int, default=synth.BenchConfig().train.epochs)
    b.add_argument("--view-scale", type=float, default=1.0)
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, formats.ParseError, checkpoint.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
