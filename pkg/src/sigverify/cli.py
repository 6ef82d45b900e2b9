"""Command-line entry point.

Subcommands: synth, split, train, eval, gradcheck, compare. Exit codes are a
stable contract: 0 success, 1 usage or config error, 2 I/O error,
3 numerical abort (non-finite loss), 4 gradient-check failure.

Every run is deterministic given its flags and seed with --threads 1, and
every output artifact embeds the seed and a config hash.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import dataclass

from . import evaluation as E
from . import gradcheck as G
from .data import (DatasetSplit, Rng, SynthConfig, load_samples, read_manifest,
                   split_dataset, synth_generate, write_manifest)
from .errors import (CheckpointError, ConfigError, DataError, MetricUndefinedError,
                     ShapeError, TrainingDiverged)
from .network import (ModelConfig, build_network, config_hash, default_cnn_config,
                      default_fcn_config, load_checkpoint, save_checkpoint)
from .training import SGDConfig, train


@dataclass
class RunConfig:
    """One training run: where data lives, how to train, where results go."""
    model: ModelConfig
    manifest: str
    out_dir: str
    sgd: SGDConfig


def _file_sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def _resolve_out(args) -> str:
    out = args.out or os.environ.get("SIGVERIFY_OUT")
    if not out:
        raise ConfigError("--out is required (or set SIGVERIFY_OUT)")
    return out


def _resolve_model(name_or_path: str, height: int, width: int) -> ModelConfig:
    if name_or_path == "cnn":
        return default_cnn_config((1, height, width))
    if name_or_path == "fcn":
        return default_fcn_config((1, height, width))
    with open(name_or_path, "r", encoding="utf-8") as fh:
        return ModelConfig.from_text(fh.read())


def _load_labeled(manifest_path, model: ModelConfig):
    catalog = read_manifest(manifest_path)
    _c, h, w = model.input_shape
    return load_samples(catalog.entries, target_hw=(h, w))


def _run_training(run: RunConfig, label: str = "model"):
    """Train one network from a RunConfig; writes checkpoint + loss log."""
    images = _load_labeled(run.manifest, run.model)
    trainset = [(img.pixels, img.label) for img in images]
    net = build_network(run.model, Rng(run.sgd.seed))
    report = train(net, trainset, run.sgd)

    os.makedirs(run.out_dir, exist_ok=True)
    ckpt_path = os.path.join(run.out_dir, "checkpoint.ckpt")
    save_checkpoint(net, ckpt_path, seed=run.sgd.seed)
    log_path = os.path.join(run.out_dir, "train_log.csv")
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# seed={run.sgd.seed}\n# model={config_hash(run.model)}\n")
        fh.write(f"# data={_file_sha256(run.manifest)}\n")
        fh.write("epoch,loss,accuracy\n")
        for e, (loss, acc) in enumerate(zip(report.losses, report.accuracies)):
            fh.write(f"{e},{loss:.10g},{acc:.10g}\n")
    total = sum(report.epoch_seconds)
    print(f"[{label}] trained {run.sgd.epochs} epochs on {len(trainset)} samples "
          f"in {total:.1f}s; final loss {report.losses[-1]:.4f}, "
          f"train accuracy {report.accuracies[-1]:.2f}%")
    print(f"[{label}] wrote {ckpt_path} and {log_path}")
    return net, report


def _eval_rows(net, manifest_path, name) -> E.MetricsRow:
    images = _load_labeled(manifest_path, net.config)
    counts, by_kind = E.evaluate_images(net, images)
    return E.row_from_counts(name, counts, by_kind)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    out = _resolve_out(args)
    cfg = SynthConfig(persons=args.persons, genuine=args.genuine, simple=args.simple,
                      skilled=args.skilled, opposite=args.opposite,
                      canvas_h=args.canvas_h, canvas_w=args.canvas_w, seed=args.seed)
    catalog = synth_generate(cfg, out)
    print(f"generated {len(catalog)} images for {cfg.persons} persons "
          f"under {out} (manifest.csv included)")
    return 0


def cmd_split(args) -> int:
    out = args.out or os.path.dirname(os.path.abspath(args.manifest))
    catalog = read_manifest(args.manifest)
    split: DatasetSplit = split_dataset(catalog, Rng(args.seed))
    os.makedirs(out, exist_ok=True)
    comments = [f"seed={args.seed}", f"source={_file_sha256(args.manifest)}"]
    write_manifest(split.train, os.path.join(out, "train.manifest"), comments)
    write_manifest(split.test, os.path.join(out, "test.manifest"), comments)
    print(f"split {len(catalog)} samples into {len(split.train)} train / "
          f"{len(split.test)} test (seed {args.seed})")
    return 0


def cmd_train(args) -> int:
    out = _resolve_out(args)
    model = _resolve_model(args.model, args.height, args.width)
    sgd = SGDConfig(learning_rate=args.lr, batch_size=args.batch_size,
                    epochs=args.epochs, seed=args.seed, threads=args.threads)
    _run_training(RunConfig(model=model, manifest=args.data, out_dir=out, sgd=sgd))
    return 0


def cmd_eval(args) -> int:
    out = _resolve_out(args)
    net, seed = load_checkpoint(args.checkpoint)
    rows = [_eval_rows(net, args.data, args.name)]
    if args.with_paper_reference:
        rows += E.reference_rows()
    text = E.render_text_table(rows)

    os.makedirs(out, exist_ok=True)
    comments = [f"seed={seed}", f"model={config_hash(net.config)}",
                f"data={_file_sha256(args.data)}"]
    with open(os.path.join(out, "metrics.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n" + "\n".join(comments) + "\n")
    with open(os.path.join(out, "metrics.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(E.render_csv(rows, header_comments=comments))
    print(text, end="")
    return 0


def cmd_gradcheck(args) -> int:
    results = G.run_all(seed=args.seed, eps=args.eps, tol=args.tolerance)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<24} max rel err {r.max_rel_err:.3e}   {status}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradient check FAILED for: {', '.join(failed)}", file=sys.stderr)
        return 4
    print("all layers pass")
    return 0


def cmd_compare(args) -> int:
    out = _resolve_out(args)
    train_hash = _file_sha256(args.train_manifest)
    test_hash = _file_sha256(args.test_manifest)

    rows, param_counts = [], {}
    presets = [("CNN", default_cnn_config), ("FCN", default_fcn_config)]
    for name, make_config in presets:
        model = make_config((1, args.height, args.width))
        sgd = SGDConfig(learning_rate=args.lr, batch_size=args.batch_size,
                        epochs=args.epochs, seed=args.seed, threads=args.threads)
        run = RunConfig(model=model, manifest=args.train_manifest,
                        out_dir=os.path.join(out, name.lower()), sgd=sgd)
        net, _report = _run_training(run, label=name)
        param_counts[name] = net.param_count
        rows.append(_eval_rows(net, args.test_manifest, name))

    if args.with_paper_reference:
        rows += E.reference_rows()
    text = E.render_text_table(rows)
    extra = [f"CNN parameters: {param_counts['CNN']}",
             f"FCN parameters: {param_counts['FCN']}",
             f"train manifest sha256: {train_hash} (shared by both models)",
             f"test manifest sha256: {test_hash} (shared by both models)",
             f"seed: {args.seed}"]
    full_text = text + "\n" + "\n".join(extra) + "\n"

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "compare.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(full_text)
    comments = [f"seed={args.seed}", f"train={train_hash}", f"test={test_hash}",
                f"params_cnn={param_counts['CNN']}", f"params_fcn={param_counts['FCN']}"]
    with open(os.path.join(out, "compare.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(E.render_csv(rows, header_comments=comments))
    print(full_text, end="")
    return 0


# ---------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):      # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_sgd_flags(p):
    p.add_argument("--lr", type=float, default=0.001, help="learning rate (default 0.001)")
    p.add_argument("--batch-size", type=int, default=128, help="minibatch size (default 128)")
    p.add_argument("--epochs", type=int, default=100, help="training epochs (default 100)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="parallel per-sample workers; 1 = deterministic mode")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sigverify",
                     description="Train and evaluate signature-verification networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic corpus")
    p.add_argument("--persons", type=int, default=4)
    p.add_argument("--genuine", type=int, default=27)
    p.add_argument("--simple", type=int, default=25)
    p.add_argument("--skilled", type=int, default=3)
    p.add_argument("--opposite", type=int, default=3)
    p.add_argument("--canvas-h", type=int, default=54)
    p.add_argument("--canvas-w", type=int, default=72)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (or set SIGVERIFY_OUT)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="split a manifest into train/test manifests")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default: manifest's directory)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model on a manifest")
    p.add_argument("--model", required=True,
                   help="'cnn', 'fcn', or a path to a model config file")
    p.add_argument("--data", required=True, help="training manifest")
    p.add_argument("--height", type=int, default=270, help="input height for presets")
    p.add_argument("--width", type=int, default=360, help="input width for presets")
    _add_sgd_flags(p)
    p.add_argument("--out", help="output directory (or set SIGVERIFY_OUT)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="test manifest")
    p.add_argument("--name", default="model", help="row label in the report")
    p.add_argument("--with-paper-reference", action="store_true",
                   help="append published baseline rows, labeled paper-reported")
    p.add_argument("--out", help="output directory (or set SIGVERIFY_OUT)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=G.DEFAULT_TOLERANCE)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("compare", help="train and evaluate both presets, report side by side")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--height", type=int, default=270)
    p.add_argument("--width", type=int, default=360)
    _add_sgd_flags(p)
    p.add_argument("--with-paper-reference", action="store_true")
    p.add_argument("--out", help="output directory (or set SIGVERIFY_OUT)")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, DataError, CheckpointError, ShapeError,
            MetricUndefinedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
