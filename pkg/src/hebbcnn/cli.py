"""Command-line driver for the full experimental pipeline.

Subcommands: whiten (fit the ZCA transform), train, eval (accuracy table
over the probe points, trained and untrained), export-rf, inspect. Exit
codes: 0 success, 1 runtime error, 2 usage error.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, load_zca, save_checkpoint, save_zca
from .config import PRESETS, preset_config, read_config, write_config
from .dataset import load_cifar10, load_cifar10_test
from .errors import HebbError
from .evaluation import probe_accuracies, probe_names
from .layers import init_network, network_train
from .rfviz import export_receptive_fields
from .whitening import DEFAULT_EPSILON, apply_zca, fit_zca

_ZCA_FILE = "zca.bin"
_WHITEN_CHUNK = 1000


def _say(args, message):
    if not getattr(args, "quiet", False):
        print(message)


def _load_train_images(args):
    data = load_cifar10(args.data)
    if args.subset:
        data = data.subset(args.subset)
    return data


def cmd_whiten(args):
    data = _load_train_images(args)
    chunks = (
        data.images[i : i + _WHITEN_CHUNK]
        for i in range(0, len(data), _WHITEN_CHUNK)
    )
    zca = fit_zca(chunks, epsilon=args.epsilon)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / _ZCA_FILE
    save_zca(path, zca)
    _say(args, f"fitted whitening on {zca.fitted_on} images (D={zca.dim}, "
               f"epsilon={zca.epsilon}) -> {path}")
    return 0


def _resolve_zca(args, out_dir, images):
    if args.zca:
        return load_zca(args.zca)
    default = out_dir / _ZCA_FILE
    if default.exists():
        return load_zca(default)
    _say(args, f"no whitening file found; fitting on {images.shape[0]} "
               f"training images (epsilon={DEFAULT_EPSILON})")
    chunks = (
        images[i : i + _WHITEN_CHUNK] for i in range(0, images.shape[0], _WHITEN_CHUNK)
    )
    zca = fit_zca(chunks, epsilon=DEFAULT_EPSILON)
    save_zca(default, zca)
    return zca


def _whitened(zca, images, batch=512):
    out = np.empty(images.shape, dtype=np.float32)
    for i in range(0, images.shape[0], batch):
        out[i : i + batch] = apply_zca(zca, images[i : i + batch].astype(np.float32))
    return out


def cmd_train(args):
    seed = args.seed if args.seed is not None else 0
    if args.config:
        cfg = read_config(args.config, base=preset_config(args.preset, seed=seed))
        tag = "custom"
    else:
        cfg = preset_config(args.preset, seed=seed)
        tag = args.preset.replace("-", "_")
    if args.seed is not None:  # the flag wins over a seed in the config file
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.epochs is not None:
        cfg = dataclasses.replace(cfg, epochs=args.epochs)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = _load_train_images(args)
    zca = _resolve_zca(args, out_dir, data.images)
    _say(args, f"whitening {len(data)} training images")
    images = _whitened(zca, data.images)

    log = None if args.quiet else lambda msg: print(msg, flush=True)
    net = network_train(cfg, images, log=log)

    ckpt = out_dir / f"checkpoint_{tag}.bin"
    save_checkpoint(ckpt, net, zca)
    write_config(out_dir / f"config_{tag}.txt", cfg)
    _say(args, f"trained {net.epochs_done} epochs -> {ckpt}")
    return 0


def _eval_one(args, label, ckpt_path, train_set, test_set, records):
    network, zca = load_checkpoint(ckpt_path)
    if zca is None:
        raise HebbError(f"{ckpt_path} carries no whitening transform")
    untrained = init_network(network.config, in_channels=train_set.images.shape[1])
    table = {}
    for trained, net in ((True, network), (False, untrained)):
        accs = probe_accuracies(
            net, zca, train_set.images, train_set.labels,
            test_set.images, test_set.labels,
        )
        if trained:
            table = accs
        for probe, acc in accs.items():
            records.append(
                {
                    "preset": label,
                    "probe": probe,
                    "trained": trained,
                    "accuracy": acc,
                    "n_train": len(train_set),
                    "n_test": len(test_set),
                    "seed": network.config.seed,
                }
            )
        tag = "trained" if trained else "untrained"
        _say(args, f"[{label} / {tag}] " + "  ".join(
            f"{probe}={acc:.4f}" for probe, acc in accs.items()))
    return network, table


def cmd_eval(args):
    train_set = _load_train_images(args)
    test_set = load_cifar10_test(args.data)
    if args.subset_test:
        test_set = test_set.subset(args.subset_test)

    records = []
    tables = {}
    checkpoints = [("default", args.checkpoint)]
    if args.checkpoint_triangle:
        checkpoints.append(("triangle_pruned", args.checkpoint_triangle))
    for label, path in checkpoints:
        _, tables[label] = _eval_one(args, label, path, train_set, test_set, records)

    report = {
        "n_train": len(train_set),
        "n_test": len(test_set),
        "results": records,
        "table": tables,
        "table_untrained": {
            label: {
                r["probe"]: r["accuracy"]
                for r in records
                if r["preset"] == label and not r["trained"]
            }
            for label, _ in checkpoints
        },
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    _say(args, f"report -> {report_path}")
    return 0


def cmd_export_rf(args):
    network, _ = load_checkpoint(args.checkpoint)
    written = export_receptive_fields(network, args.layer, args.out)
    _say(args, f"receptive fields of layer {args.layer} -> {written}")
    return 0


def cmd_inspect(args):
    network, zca = load_checkpoint(args.checkpoint)
    cfg = network.config
    print(f"checkpoint: {args.checkpoint}")
    print(f"rule={cfg.rule.value} epochs_done={network.epochs_done} "
          f"(target {cfg.epochs}) batch_size={cfg.batch_size} "
          f"learning_rate={cfg.learning_rate} threshold_rate={cfg.threshold_rate} "
          f"ema_horizon={cfg.ema_horizon} seed={cfg.seed} greedy={cfg.greedy}")
    for i, layer in enumerate(network.layers, start=1):
        norms = layer.filter_norms()
        density = float(layer.mask.mean())
        print(f"layer {i}: {layer.spec.filters} filters, kernel "
              f"{layer.spec.kernel}x{layer.spec.kernel}, activation "
              f"{layer.spec.activation}, mask density {density:.4f}")
        print(f"  filter norms [{norms.min():.6f}, {norms.max():.6f}]  "
              f"bias [{layer.bias.min():+.4f}, {layer.bias.max():+.4f}]  "
              f"win rate [{layer.rate_ema.min():.4f}, {layer.rate_ema.max():.4f}] "
              f"(target {layer.spec.target_rate:.4f})")
    if zca is not None:
        print(f"whitening: D={zca.dim} epsilon={zca.epsilon} "
              f"fitted on {zca.fitted_on} images")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hebbcnn",
        description="Hebbian convolutional feature learning pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data=True):
        if data:
            p.add_argument("--data", required=True, help="dataset directory or .bin file")
        p.add_argument("--seed", type=int, default=None, help="RNG seed")
        p.add_argument("--subset", type=int, default=None,
                       help="use only the first N training images")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("whiten", help="fit the whitening transform")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.set_defaults(func=cmd_whiten)

    p = sub.add_parser("train", help="train a network")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--preset", choices=PRESETS, default="default")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--epochs", type=int, default=None, help="override epoch count")
    p.add_argument("--zca", default=None, help="whitening file (default: <out>/zca.bin)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="probe accuracy table, trained and untrained")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--checkpoint", required=True, help="default-network checkpoint")
    p.add_argument("--checkpoint-triangle", default=None,
                   help="triangle-pruned checkpoint (optional second column)")
    p.add_argument("--subset-test", type=int, default=None,
                   help="use only the first N test images")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-rf", help="render a layer's receptive fields")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", type=int, required=True, help="1-based layer index")
    p.add_argument("--out", required=True, help="image file (.png or .ppm)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_export_rf)

    p = sub.add_parser("inspect", help="print config, norms and firing rates")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles usage/help printing
        return 0 if exc.code in (0, None) else exc.code
    try:
        return args.func(args)
    except HebbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
