"""Command-line entry point: corpus generation, training, evaluation,
per-bag scoring, and the gradient self-check.

Flag precedence for `train`: explicit flag > config file > built-in default.
The config file is flat ``key=value`` text whose keys mirror the long flag
names (``lr``, ``batch``, ``epochs``, ...); blank lines and ``#`` comments
are ignored.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .data import default_split, generate_synthetic_corpus, load_bag, load_manifest, write_corpus
from .errors import LvadError
from .gradcheck import run_gradient_checks
from .training import (
    TrainConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
    write_history,
    write_score_table,
)

_TRAIN_DEFAULTS = {
    "lr": 5e-4,
    "batch": 128,
    "epochs": 50,
    "seed": 0,
    "prefix-dim": 64,
    "bottleneck": 256,
    "dropout": 0.1,
    "eta": -1.0,
    "layers": 2,
    "heads": 4,
    "gate-off": False,
}

_TRAIN_TYPES = {
    "lr": float,
    "batch": int,
    "epochs": int,
    "seed": int,
    "prefix-dim": int,
    "bottleneck": int,
    "dropout": float,
    "eta": float,
    "layers": int,
    "heads": int,
    "gate-off": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lvad", description="Weakly supervised audio-visual anomaly detection."
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic corpus and manifest")
    gen.add_argument("--out", required=True, help="output directory (required)")
    gen.add_argument("--seed", type=int, default=7, help="corpus seed (default 7)")
    gen.add_argument("--normal", type=int, default=60, help="normal bag count (default 60)")
    gen.add_argument("--abnormal", type=int, default=60, help="anomalous bag count (default 60)")
    gen.add_argument("--dv", type=int, default=32, help="visual feature width (default 32)")
    gen.add_argument("--da", type=int, default=8, help="audio feature width (default 8)")
    gen.add_argument("--t-min", type=int, default=20, help="shortest bag in snippets (default 20)")
    gen.add_argument("--t-max", type=int, default=60, help="longest bag in snippets (default 60)")
    gen.add_argument("--rate", type=float, default=0.3, help="anomalous window fraction (default 0.3)")
    gen.add_argument("--separation", type=float, default=4.0, help="anomaly shift distance (default 4.0)")

    tr = sub.add_parser("train", help="train on a manifest's train split")
    tr.add_argument("--manifest", required=True, help="manifest.tsv path (required)")
    tr.add_argument("--out", required=True, help="output directory (required)")
    tr.add_argument("--config", default=None, help="key=value config file (default none)")
    tr.add_argument("--lr", type=float, default=None, help="learning rate (default 5e-4)")
    tr.add_argument("--batch", type=int, default=None, help="bags per batch (default 128)")
    tr.add_argument("--epochs", type=int, default=None, help="training epochs (default 50)")
    tr.add_argument("--seed", type=int, default=None, help="training seed (default 0)")
    tr.add_argument("--prefix-dim", type=int, default=None, help="prefix rows per head (default 64)")
    tr.add_argument("--bottleneck", type=int, default=None, help="adapter width (default 256)")
    tr.add_argument("--dropout", type=float, default=None, help="adapter dropout rate (default 0.1)")
    tr.add_argument("--eta", type=float, default=None, help="manifold curvature, negative (default -1)")
    tr.add_argument("--layers", type=int, default=None, help="graph layers per branch (default 2)")
    tr.add_argument("--heads", type=int, default=None, help="attention heads (default 4)")
    tr.add_argument("--gate-off", action="store_const", const=True, default=None,
                    help="force the modulation gate to zero (visual-only ablation)")

    ev = sub.add_parser("eval", help="frame-level metrics on a manifest's test split")
    ev.add_argument("--checkpoint", required=True, help="checkpoint .npz path (required)")
    ev.add_argument("--manifest", required=True, help="manifest.tsv path (required)")
    ev.add_argument("--out", required=True, help="output directory (required)")

    sc = sub.add_parser("score", help="per-frame score table for one bag file")
    sc.add_argument("--checkpoint", required=True, help="checkpoint .npz path (required)")
    sc.add_argument("--bag", required=True, help="bag file path (required)")
    sc.add_argument("--out", required=True, help="output CSV path (required)")

    gc = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    gc.add_argument("--seed", type=int, default=0, help="probe seed (default 0)")
    gc.add_argument("--tol", type=float, default=1e-4, help="relative tolerance (default 1e-4)")
    return parser


def _read_config_file(path: str) -> dict:
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise LvadError(f"{path}:{line_no}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _TRAIN_TYPES:
            raise LvadError(f"{path}:{line_no}: unknown key {key!r}")
        try:
            values[key] = _TRAIN_TYPES[key](value.strip())
        except ValueError:
            raise LvadError(f"{path}:{line_no}: bad value for {key!r}") from None
    return values


def _resolve_train_settings(args: argparse.Namespace) -> dict:
    from_file = _read_config_file(args.config) if args.config else {}
    settings = {}
    for key, default in _TRAIN_DEFAULTS.items():
        flag_value = getattr(args, key.replace("-", "_"))
        if flag_value is not None:
            settings[key] = flag_value
        elif key in from_file:
            settings[key] = from_file[key]
        else:
            settings[key] = default
    return settings


def _cmd_gen_data(args: argparse.Namespace) -> int:
    bags = generate_synthetic_corpus(
        args.seed, args.normal, args.abnormal, (args.t_min, args.t_max),
        args.dv, args.da, args.rate, args.separation,
    )
    manifest_path = write_corpus(bags, args.out, default_split(bags))
    print(f"wrote {len(bags)} bags; manifest at {manifest_path}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    settings = _resolve_train_settings(args)
    config = TrainConfig(
        learning_rate=settings["lr"],
        batch_size=settings["batch"],
        epochs=settings["epochs"],
        seed=settings["seed"],
        heads=settings["heads"],
        prefix_dim=settings["prefix-dim"],
        adapter_width=settings["bottleneck"],
        dropout=settings["dropout"],
        curvature=settings["eta"],
        layers=settings["layers"],
        gate_off=settings["gate-off"],
    )
    bags = load_manifest(args.manifest).load_split("train")
    params, history = train(bags, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.npz", params, config, config.epochs)
    write_history(history, out / "history.csv")
    print(f"trained {config.epochs} epochs on {len(bags)} bags; "
          f"final loss {history[-1]['loss']:.6f}; artifacts in {out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    params, config, _ = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    bags = manifest.load_split("test") or manifest.load_split("train")
    metrics = evaluate(params, bags, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        ("ap", metrics["average_precision"]),
        ("accuracy", metrics["accuracy"]),
        ("precision", metrics["precision"]),
        ("recall", metrics["recall"]),
    ]
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in rows])
        writer.writerow([repr(value) for _, value in rows])
    lines = [f"{name} = {value!r}" for name, value in rows]
    lines.append(f"frames = {metrics['frames']}")
    (out / "metrics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_score_table(params, bags, config, out / "scores.csv")
    for line in lines:
        print(line)
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    params, config, _ = load_checkpoint(args.checkpoint)
    bag = load_bag(args.bag)
    write_score_table(params, [bag], config, args.out)
    print(f"wrote {16 * bag.t} frame scores for {bag.bag_id} to {args.out}")
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    records = run_gradient_checks(args.seed, args.tol)
    for record in records:
        verdict = "ok" if record.passed else "FAIL"
        print(f"{record.name:16s} violation {record.violation:10.6f}  {verdict}")
    failed = [r for r in records if not r.passed]
    print(f"{len(records) - len(failed)}/{len(records)} gradient checks passed")
    return 1 if failed else 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "score": _cmd_score,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.subcommand == "gen-data" and args.t_min > args.t_max:
        parser.error("--t-min must not exceed --t-max")  # exits 2 with usage
    try:
        return _COMMANDS[args.subcommand](args)
    except LvadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
