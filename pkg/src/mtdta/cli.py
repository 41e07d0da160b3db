"""Command line: prepare / train / eval / predict.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. Configuration is a flat ``key=value`` text file, overridable
with repeated ``--set key=value`` flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import data, layers, metrics, train
from .smiles import MolParseError
from .tensor import NonFiniteError

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


_CONFIG_TYPES = {
    "model": str, "loss_mode": str, "gamma": float, "optim_kind": str,
    "lr": float, "sync_period": int, "alpha": float, "clip_norm": float,
    "batch_size": int, "epochs": int, "seed": int,
    "max_len_drug": int, "max_len_protein": int, "checkpoint_dir": str,
    "target_task": str, "embed_dim": int, "hidden_dim": int,
    "conv_channels": int,
}


def load_config(path=None, overrides=()):
    values = {}
    if path:
        try:
            with open(path) as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for lineno, line in enumerate(lines, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = value

    config = train.RunConfig()
    for key, raw in values.items():
        if key == "monitor_tasks":
            config.monitor_tasks = tuple(t.strip() for t in raw.split(","))
            continue
        if key == "loss_weights":
            try:
                config.loss_weights = {
                    k: float(v) for k, v in
                    (pair.split(":") for pair in raw.split(","))}
            except ValueError as exc:
                raise ConfigError(f"bad loss_weights {raw!r}") from exc
            continue
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(config, key, _CONFIG_TYPES[key](raw))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def cmd_prepare(args):
    split, paths = data.prepare_dataset(args.input, args.output, args.seed)
    print(f"train: {len(split.train)}  validation: {len(split.validation)}  "
          f"test: {sum(len(v) for v in split.tests.values())}")
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    return 0


def cmd_train(args):
    config = load_config(args.config, args.set or ())
    if args.seed is not None:
        config.seed = args.seed
    train_records = data.read_partition(args.train)
    val_records = data.read_partition(args.validation)
    if not train_records or not val_records:
        raise data.DataError("empty train or validation partition")

    def log_fn(entry):
        print(f"epoch {entry['epoch']:4d}  "
              f"monitor {entry['monitor']:.6f}  "
              f"wall {entry['wall_time']:.1f}s")

    model, encoder, log = train.train_model(train_records, val_records,
                                            config, log_fn=log_fn)
    os.makedirs(config.checkpoint_dir, exist_ok=True)
    log_path = os.path.join(config.checkpoint_dir, "train_log.json")
    with open(log_path, "w") as fh:
        fh.write(log.to_json())
    log.write_curves_csv(os.path.join(config.checkpoint_dir, "curves.csv"))
    print(f"best epoch {log.best_epoch} (monitor {log.best_monitor:.6f})")
    print(f"checkpoint: {log.best_checkpoint}")
    return 0


def _load_model(path):
    model, extra = layers.load_checkpoint(path)
    encoder = train.Encoder.from_extra(extra)
    target_task = extra.get("config", {}).get("target_task", "kd")
    return model, encoder, target_task


def cmd_eval(args):
    model, encoder, target_task = _load_model(args.checkpoint)
    records = data.read_partition(args.partition)
    if not records:
        raise data.DataError(f"empty partition {args.partition}")
    report = train.evaluate_partition(model, encoder, records, target_task)
    base = args.output or os.path.splitext(args.partition)[0] + "_metrics"
    metrics.write_report_files(report, base + ".json", base + ".csv",
                               os.path.basename(args.checkpoint),
                               os.path.basename(args.partition))
    print(report.to_json())
    if args.against:
        model_b, encoder_b, _ = _load_model(args.against)
        task = target_task if model.spec.tasks == ("affinity",) else args.sign_task
        preds_a = train.predict_records(model, encoder, records)
        preds_b = train.predict_records(model_b, encoder_b, records)
        table = train.batch_labels(records, (task,), target_task)
        mask = table[task].present_mask > 0
        key_a = "affinity" if model.spec.tasks == ("affinity",) else task
        key_b = "affinity" if model_b.spec.tasks == ("affinity",) else task
        result = metrics.sign_test(preds_a[key_a][mask], preds_b[key_b][mask],
                                   table[task].values[mask])
        sign_json = json.dumps(vars(result), indent=2)
        with open(base + "_signtest.json", "w") as fh:
            fh.write(sign_json + "\n")
        print(sign_json)
    return 0


def cmd_predict(args):
    model, encoder, _ = _load_model(args.checkpoint)
    record = data.DtaRecord(smiles=args.smiles, protein=args.protein)
    try:
        # validate even when the drug branch only tokenizes
        from .smiles import parse_smiles
        parse_smiles(args.smiles)
        preds = train.predict_records(model, encoder, [record])
    except MolParseError as exc:
        raise data.DataError(f"SMILES parse failure: {exc}") from exc
    for task in model.spec.tasks:
        print(f"{task}\t{float(preds[task][0]):.6f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mtdta",
        description="Multi-task drug-target affinity models with "
                    "missing-label-aware training.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build train/validation/test partitions")
    p.add_argument("input", help="BindingDB-style TSV")
    p.add_argument("output", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("train", help="train partition TSV")
    p.add_argument("validation", help="validation partition TSV")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a partition")
    p.add_argument("checkpoint")
    p.add_argument("partition")
    p.add_argument("--output", help="output file basename")
    p.add_argument("--against", help="second checkpoint for a sign test")
    p.add_argument("--sign-task", default="kd",
                   help="task whose errors the sign test compares")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="predict all task outputs for one pair")
    p.add_argument("checkpoint")
    p.add_argument("smiles")
    p.add_argument("protein")
    p.set_defaults(fn=cmd_predict)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (data.DataError, MolParseError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
