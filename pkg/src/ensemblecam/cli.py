"""Command-line surface: generate / train / explain / evaluate.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
Defaults mirror the training recipe (AdamW, lr 5e-4, 20 epochs, step
decay 7/0.1), so `ecam train` with no tuning flags runs the reference
recipe at toy scale.  All commands are deterministic given their flags;
seeds are echoed in every output's metadata.

A config file of key=value lines may supply any long-flag default
(`--config run.cfg`); explicit flags win.  ECAM_THREADS caps worker
parallelism (evaluation currently runs serially, which satisfies any
cap).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import cam as cam_mod
from . import faithfulness, model as model_mod, synthdata, viz
from .faithfulness import METHOD_NAMES

EXPLAIN_METHODS = ("grad_cam", "hires_cam", "grad_cam_pp", "ensemble")
CLASS_CHOICES = ("predicted", "live", "spoof")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


def _load_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def max_threads() -> int:
    raw = os.environ.get("ECAM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecam",
        description="Ensemble-CAM explanations and retention benchmark for a small PAD CNN")
    parser.add_argument("--config", help="key=value file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic live/spoof dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--per-class", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--intensity", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.02)

    p = sub.add_parser("train", help="train the small CNN on a generated dataset")
    p.add_argument("--data", required=True, help="manifest.jsonl path")
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--lr", type=float, default=0.0005)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--step-size", type=int, default=7)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("explain", help="render CAM overlays for one image")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--class", dest="target_class", choices=CLASS_CHOICES,
                   default="predicted")
    p.add_argument("--methods", default=",".join(EXPLAIN_METHODS),
                   help="comma-separated subset of " + ",".join(EXPLAIN_METHODS))
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("evaluate", help="run the retention faithfulness benchmark")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=synthdata.SPLITS)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report path prefix (.json/.csv appended)")
    return parser


def cmd_generate(args) -> int:
    spec = synthdata.SynthSpec(per_class=args.per_class, seed=args.seed,
                               intensity=args.intensity, noise_level=args.noise)
    manifest = synthdata.generate(spec, args.out)
    print(f"wrote {len(manifest.entries)} images to {args.out} "
          f"(seed {args.seed}, intensity {args.intensity})")
    return EXIT_OK


def cmd_train(args) -> int:
    if not Path(args.data).exists():
        raise ConfigError(f"manifest not found: {args.data}")
    config = model_mod.TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                                   step_size=args.step_size, gamma=args.gamma,
                                   batch_size=args.batch_size, seed=args.seed)
    train_set = [(img, lbl) for _, img, lbl in synthdata.load_split(args.data, "train")]
    net = model_mod.init_small_cnn(args.seed)
    net, history = model_mod.train(net, train_set, config)
    model_mod.save_weights(net, args.out)

    metrics = {
        "seed": args.seed,
        "config": asdict(config),
        "history": [asdict(h) for h in history],
    }
    for split in ("val", "test"):
        samples = [(img, lbl) for _, img, lbl in synthdata.load_split(args.data, split)]
        metrics[split] = model_mod.pad_metrics(net, samples)
    metrics_path = str(args.out) + ".metrics.json"
    with open(metrics_path, "w") as f:
        json.dump(metrics, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote weights to {args.out}; metrics to {metrics_path}")
    print(f"test metrics: {metrics['test']}")
    return EXIT_OK


def _explain_one_class(net, image, trace, class_index, methods, out_dir, stem):
    a = trace.target_activations[0]
    g = model_mod.class_gradients(net, trace, class_index)
    h, w = image.shape[-2:]
    ensemble, parts = cam_mod.ensemble_cam(a, g, h, w)
    by_name = dict(zip(("grad_cam", "hires_cam", "grad_cam_pp"), parts))
    by_name["ensemble"] = ensemble

    info = {}
    named = []
    for method in methods:
        c = by_name[method]
        named.append((method, c))
        synthdata.write_image(viz.overlay(image, c), out_dir / f"{stem}_{method}.png")
        mask = (cam_mod.support_mask(c) if method == "ensemble"
                else cam_mod.top_fraction_mask(c, cam_mod.ENSEMBLE_FRACTION))
        info[method] = {
            "retained_count": mask.retained_count,
            "threshold_value": cam_mod.threshold_value(c.values if method != "ensemble"
                                                       else np.asarray(c.values),
                                                       cam_mod.ENSEMBLE_FRACTION),
        }
    panel_name = f"{stem}_panel_original-" + "-".join(m for m, _ in named) + ".png"
    synthdata.write_image(viz.comparison_panel(image, named), out_dir / panel_name)
    return info, panel_name


def cmd_explain(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in EXPLAIN_METHODS]
    if bad or not methods:
        raise ConfigError(f"unknown method(s) {bad}; valid methods: {', '.join(EXPLAIN_METHODS)}")
    if not Path(args.weights).exists():
        raise ConfigError(f"weights not found: {args.weights}")
    net = model_mod.load_weights(args.weights)
    image = synthdata.load_image(args.image)
    trace = model_mod.forward(net, image)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.target_class == "predicted":
        classes = [trace.predicted_class]
    else:
        requested = synthdata.LABELS.index(args.target_class)
        # an explicit class differing from the prediction gets both panels,
        # mirroring the dual-row wrong-prediction analysis
        classes = [requested] if requested == trace.predicted_class \
            else [requested, trace.predicted_class]

    result = {
        "image": str(args.image),
        "predicted_class": synthdata.LABELS[trace.predicted_class],
        "confidence": trace.confidence,
        "classes": {},
    }
    for class_index in classes:
        label = synthdata.LABELS[class_index]
        info, panel = _explain_one_class(net, image, trace, class_index, methods,
                                         out_dir, f"class_{label}")
        result["classes"][label] = {"methods": info, "panel": panel}
    with open(out_dir / "explain.json", "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"explained {args.image}: predicted {result['predicted_class']} "
          f"({trace.confidence:.3f}); outputs in {out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if not Path(args.weights).exists():
        raise ConfigError(f"weights not found: {args.weights}")
    if not Path(args.data).exists():
        raise ConfigError(f"manifest not found: {args.data}")
    net = model_mod.load_weights(args.weights)
    dataset = synthdata.load_split(args.data, args.split)
    report = faithfulness.evaluate_dataset(
        net, dataset, methods=METHOD_NAMES, fraction=args.fraction,
        seed=args.seed, dataset_id=f"{args.data}:{args.split}")
    report.write_json(str(args.out) + ".json")
    report.write_csv(str(args.out) + ".csv")
    for row in report.rows:
        print(f"{row.method:>12}: drop {row.average_confidence_drop:7.3f} pts, "
              f"change {row.prediction_change_pct:6.2f}%")
    print(f"wrote {args.out}.json and {args.out}.csv")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)

    # pre-scan for --config so its values become parser defaults
    pre, _ = parser.parse_known_args(argv) if argv else (None, None)
    try:
        if pre is not None and pre.config:
            defaults = _load_config_file(pre.config)
            for subparser in parser._subparsers._group_actions[0].choices.values():
                converted = {}
                for action in subparser._actions:
                    if action.dest in defaults:
                        raw = defaults[action.dest]
                        converted[action.dest] = action.type(raw) if action.type else raw
                subparser.set_defaults(**converted)
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit:
        raise
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
