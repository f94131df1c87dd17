"""Command-line entry point: ``bokehornot {gen-synth,stats,train,eval,infer}``.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

import argparse
import logging
import sys
import warnings
from collections import Counter
from pathlib import Path


from . import reports
from .checkpoint import CheckpointError
from .config import load_config
from .data import SynthConfig, generate_synthetic, load_dataset, read_rgb, write_rgb
from .engine import RunSink, build_model, evaluate, infer, load_model, load_train_state, train
from .errors import BokehError, ValidationError
from .lens_meta import MetaTuple, parse_lens_name

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("bokehornot")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _resolve(args, path):
    if path is None:
        return None
    path = Path(path)
    if args.workdir is not None and not path.is_absolute():
        return Path(args.workdir) / path
    return path


def cmd_gen_synth(args):
    out = _resolve(args, args.out)
    cfg = SynthConfig(image_size=(args.size, args.size), num_pairs=args.pairs, seed=args.seed)
    metas = generate_synthetic(cfg, out)
    print(f"wrote {len(metas)} pairs to {out}")
    for (src, tgt), n in sorted(Counter((m.source.short_label, m.target.short_label) for m in metas).items()):
        print(f"  {src:>9} -> {tgt:<9} {n}")
    return EXIT_OK


def cmd_stats(args):
    records = load_dataset(_resolve(args, args.data))
    metas = [r.meta for r in records]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        baseline = evaluate(records, None)
    if args.json:
        sys.stdout.write(reports.json_records(baseline, metas))
    else:
        sys.stdout.write(reports.format_stats(metas, baseline))
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(_resolve(args, args.config), args.workdir)
    if cfg.data is None:
        raise ValidationError("configuration problems:\n  data: required for training")
    records = load_dataset(cfg.data)
    val = load_dataset(cfg.val_data) if cfg.val_data else None
    sink = RunSink(cfg.output_dir, checkpoint_every=cfg.checkpoint_every)
    if args.resume:
        state = train(records, resume=load_train_state(_resolve(args, args.resume)), sink=sink,
                      val_dataset=val, val_every=cfg.val_every)
    else:
        model = build_model(cfg.model, seed=cfg.seed)
        state = train(records, model, cfg.stages, sink=sink, seed=cfg.seed, val_dataset=val,
                      val_every=cfg.val_every)
    summary = f"trained {len(state.losses)} iterations (total {state.global_step})"
    if state.losses:
        summary += f"; final loss {state.losses[-1]:.6g}"
    print(summary)
    print(f"checkpoint: {sink.out_dir / 'final.ckpt'}")
    return EXIT_OK


def cmd_eval(args):
    model = load_model(_resolve(args, args.checkpoint))
    records = load_dataset(_resolve(args, args.data))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = evaluate(records, model, tile=args.tile, overlap=args.overlap)
    if args.json:
        sys.stdout.write(reports.json_records(result))
    else:
        sys.stdout.write(reports.format_records(result))
        sys.stdout.write(reports.format_table(result, "Model output vs target") + "\n")
    return EXIT_OK


def cmd_infer(args):
    meta = MetaTuple(args.id, parse_lens_name(args.source_lens), parse_lens_name(args.target_lens),
                            args.disparity)
    model = load_model(_resolve(args, args.checkpoint))
    image = read_rgb(_resolve(args, args.input))
    out = infer(image, meta, model, tile=args.tile, overlap=args.overlap)
    dest = _resolve(args, args.output)
    dest.parent.mkdir(parents=True, exist_ok=True)
    write_rgb(dest, out)
    print(f"wrote {dest} ({out.shape[2]}x{out.shape[1]})")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="bokehornot", description="Lens-conditioned bokeh transformation.")
    p.add_argument("--workdir", help="resolve relative paths against this directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-synth", help="write a synthetic depth-of-field dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--pairs", type=_positive, default=8)
    g.add_argument("--size", type=_positive, default=128)
    g.add_argument("--seed", type=int, default=7)
    g.set_defaults(func=cmd_gen_synth)

    s = sub.add_parser("stats", help="lens-pair distribution and source-vs-target metrics")
    s.add_argument("--data", required=True)
    s.add_argument("--json", action="store_true", help="emit JSON lines instead of tables")
    s.set_defaults(func=cmd_stats)

    t = sub.add_parser("train", help="run the two-stage training schedule")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", help="continue from a checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--tile", type=_positive)
    e.add_argument("--overlap", type=int, default=64)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="transform one image")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--output", required=True)
    i.add_argument("--source-lens", required=True)
    i.add_argument("--target-lens", required=True)
    i.add_argument("--disparity", type=float, default=0.0)
    i.add_argument("--id", default="infer")
    i.add_argument("--tile", type=_positive)
    i.add_argument("--overlap", type=int, default=64)
    i.set_defaults(func=cmd_infer)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BokehError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
