"""Training orchestration: encoding, epoch loop, validation-based model
selection, checkpointing, learning-curve emission."""

from __future__ import annotations

import csv
import json
import os
import random
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import layers, losses, metrics, optim
from . import smiles as sm
from . import tensor as T
from .data import CONSTANT_TASKS, TASKS

__all__ = ["RunConfig", "Encoder", "TrainLog", "train_model", "predict_records"]


@dataclass
class RunConfig:
    model: str = "resCNN1"
    loss_mode: str = "mask"            # mask | lode
    gamma: float = 0.5
    loss_weights: dict | None = None
    optim_kind: str = "lookahead_nadam"
    lr: float = 0.0005
    sync_period: int = 3
    alpha: float = 0.5
    clip_norm: float | None = None
    batch_size: int = 256
    epochs: int = 100
    seed: int = 0
    max_len_drug: int = 100
    max_len_protein: int = 1000
    checkpoint_dir: str = "checkpoints"
    target_task: str = "kd"            # label for single-task baselines
    monitor_tasks: tuple | None = None
    embed_dim: int | None = None
    hidden_dim: int | None = None
    conv_channels: int | None = None

    def validate(self):
        known = set(layers.NAMED_SPECS) | {"gcn3", "gin5"}
        if self.model not in known:
            raise ValueError(f"unknown model {self.model!r} (choose from {sorted(known)})")
        if self.loss_mode not in ("mask", "lode"):
            raise ValueError(f"loss mode must be mask or lode, got {self.loss_mode!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.optim_kind not in ("adam", "nadam", "lookahead_nadam"):
            raise ValueError(f"unknown optimizer {self.optim_kind!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.target_task not in TASKS:
            raise ValueError(f"unknown target task {self.target_task!r}")

    def is_multitask(self):
        return self.model in layers.NAMED_SPECS


class Encoder:
    """Vocabulary-backed record encoder, built from the training split."""

    def __init__(self, drug_vocab, protein_vocab, max_len_drug, max_len_protein,
                 graph_mode):
        self.drug_vocab = drug_vocab
        self.protein_vocab = protein_vocab
        self.max_len_drug = max_len_drug
        self.max_len_protein = max_len_protein
        self.graph_mode = graph_mode

    @classmethod
    def build(cls, train_records, max_len_drug, max_len_protein, graph_mode):
        drug_vocab = sm.Vocab.build(
            "drug", (sm.tokenize_smiles(r.smiles) for r in train_records))
        protein_vocab = sm.Vocab.build(
            "protein", (list(r.protein) for r in train_records))
        return cls(drug_vocab, protein_vocab, max_len_drug, max_len_protein,
                   graph_mode)

    def encode(self, record):
        if self.graph_mode:
            drug = sm.parse_smiles(record.smiles)
        else:
            drug = sm.encode_sequence(record.smiles, self.drug_vocab,
                                      self.max_len_drug)
        protein = sm.encode_sequence(record.protein, self.protein_vocab,
                                     self.max_len_protein)
        return drug, protein

    def to_extra(self):
        return {
            "drug_vocab": self.drug_vocab.index,
            "protein_vocab": self.protein_vocab.index,
            "max_len_drug": self.max_len_drug,
            "max_len_protein": self.max_len_protein,
            "graph_mode": self.graph_mode,
        }

    @classmethod
    def from_extra(cls, extra):
        dv = sm.Vocab("drug")
        dv.index = dict(extra["drug_vocab"])
        pv = sm.Vocab("protein")
        pv.index = dict(extra["protein_vocab"])
        return cls(dv, pv, extra["max_len_drug"], extra["max_len_protein"],
                   extra["graph_mode"])


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_monitor: float = float("inf")
    best_checkpoint: str = ""

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    def write_curves_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("epoch", "task", "split", "value"))
            for entry in self.epochs:
                for task, v in entry["train_loss"].items():
                    writer.writerow((entry["epoch"], task, "train", v))
                for task, v in entry["val_mse"].items():
                    writer.writerow((entry["epoch"], task, "validation", v))


def _record_labels(record, tasks, target_task):
    out = {}
    for task in tasks:
        if task == "affinity":
            out[task] = record.label(target_task)
        else:
            out[task] = record.label(task)
    return out


def batch_labels(records, tasks, target_task="kd"):
    """Per-task TaskBatchLabels over a record batch."""
    out = {}
    for task in tasks:
        vals = np.zeros(len(records))
        mask = np.zeros(len(records))
        for i, rec in enumerate(records):
            v = _record_labels(rec, (task,), target_task)[task]
            if v is not None:
                vals[i] = float(v)
                mask[i] = 1.0
        out[task] = losses.TaskBatchLabels(values=vals, present_mask=mask)
    return out


def _loss_kind(task):
    return "bce" if task == "active" else "mse"


def compute_batch_loss(model, encoded_batch, labels, mode="mask",
                       lode_states=None, weights=None):
    preds = model.forward_batch(encoded_batch)
    task_losses = {}
    for task in model.spec.tasks:
        if mode == "lode":
            task_losses[task] = losses.lode_loss(
                preds[task], labels[task], lode_states[task],
                kind=_loss_kind(task))
        elif _loss_kind(task) == "bce":
            task_losses[task] = losses.masked_bce(preds[task], labels[task])
        else:
            task_losses[task] = losses.masked_mse(preds[task], labels[task])
    return composite_and_parts(task_losses, weights)


def composite_and_parts(task_losses, weights):
    return losses.composite_loss(task_losses, weights), task_losses


def build_from_config(config, drug_vocab_size, protein_vocab_size):
    overrides = {}
    for key in ("embed_dim", "hidden_dim", "conv_channels"):
        v = getattr(config, key)
        if v is not None:
            overrides[key] = v
    if config.is_multitask():
        spec = layers.NAMED_SPECS[config.model]
        spec = layers.ModelSpec(**{**vars(spec), **overrides})
        return layers.build_model(spec, drug_vocab_size, protein_vocab_size,
                                  config.seed)
    return layers.build_singletask_baseline(
        config.model, drug_vocab_size, protein_vocab_size, config.seed,
        **overrides)


def validation_mse(model, encoded, label_table, tasks):
    """Per-task MSE (BCE for active) over present validation labels."""
    preds = model.forward_batch(encoded)
    out = {}
    for task in tasks:
        labels = label_table[task]
        if labels.n_present == 0:
            continue
        if _loss_kind(task) == "bce":
            out[task] = float(losses.masked_bce(preds[task], labels).data)
        else:
            out[task] = float(losses.masked_mse(preds[task], labels).data)
    return out


def train_model(train_records, val_records, config, log_fn=None):
    """Epoch loop with seeded shuffling and best-validation checkpointing.

    Returns (model, encoder, TrainLog); the returned model carries the
    final (not best) weights, the best checkpoint is on disk.
    """
    config.validate()
    graph_mode = config.model in ("gcn3", "gin5") or \
        layers.NAMED_SPECS.get(config.model, layers.ModelSpec()).drug_branch != "cnn"
    encoder = Encoder.build(train_records, config.max_len_drug,
                            config.max_len_protein, graph_mode)
    model = build_from_config(config, encoder.drug_vocab.size,
                              encoder.protein_vocab.size)
    tasks = model.spec.tasks

    opt = optim.make_optimizer(model.params, kind=config.optim_kind,
                               lr=config.lr, sync_period=config.sync_period,
                               alpha=config.alpha, clip_norm=config.clip_norm)
    lode_states = {t: losses.LodeState(gamma=config.gamma) for t in tasks}

    encoded_train = [encoder.encode(r) for r in train_records]
    encoded_val = [encoder.encode(r) for r in val_records]
    val_label_table = batch_labels(val_records, tasks, config.target_task)

    monitor_tasks = config.monitor_tasks
    if monitor_tasks is None:
        monitor_tasks = tuple(
            t for t in tasks if t != "active"
            and val_label_table[t].n_present > 0) or tuple(tasks)

    rng = random.Random(config.seed)
    order = list(range(len(train_records)))
    log = TrainLog()
    os.makedirs(config.checkpoint_dir, exist_ok=True)
    best_path = os.path.join(config.checkpoint_dir, "best.ckpt")

    for epoch in range(config.epochs):
        t0 = time.time()
        rng.shuffle(order)
        epoch_losses = {t: [] for t in tasks}
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = [encoded_train[i] for i in idx]
            labels = batch_labels([train_records[i] for i in idx], tasks,
                                  config.target_task)
            total, parts = compute_batch_loss(
                model, batch, labels, mode=config.loss_mode,
                lode_states=lode_states, weights=config.loss_weights)
            if not np.isfinite(total.data):
                raise T.NonFiniteError(
                    f"non-finite loss at epoch {epoch} batch {start // config.batch_size}")
            grads = {}
            if total._tracked():
                T.backward(total)
                for name, p in model.params.items():
                    if p.grad is not None:
                        grads[name] = p.grad
                        p.grad = None
            if grads:
                opt.step(grads)
            for t_name, part in parts.items():
                epoch_losses[t_name].append(float(part.data))

        val_mse = validation_mse(model, encoded_val, val_label_table, tasks)
        monitored = [val_mse[t] for t in monitor_tasks if t in val_mse]
        monitor = float(np.mean(monitored)) if monitored else float("nan")
        entry = {
            "epoch": epoch,
            "train_loss": {t: float(np.mean(v)) for t, v in epoch_losses.items()},
            "val_mse": val_mse,
            "monitor": monitor,
            "wall_time": time.time() - t0,
        }
        log.epochs.append(entry)
        if monitored and monitor < log.best_monitor:
            log.best_monitor = monitor
            log.best_epoch = epoch
            log.best_checkpoint = best_path
            layers.save_checkpoint(best_path, model, extra={
                **encoder.to_extra(),
                "config": {k: v for k, v in asdict(config).items()
                           if not isinstance(v, dict)},
                "best_epoch": epoch,
                "best_monitor": monitor,
            })
        if log_fn:
            log_fn(entry)

    return model, encoder, log


def predict_records(model, encoder, records):
    """Per-task prediction arrays for a record list."""
    encoded = [encoder.encode(r) for r in records]
    preds = model.forward_batch(encoded)
    return {task: np.asarray(p.data) for task, p in preds.items()}


def evaluate_partition(model, encoder, records, target_task="kd"):
    tasks = model.spec.tasks
    preds = predict_records(model, encoder, records)
    table = batch_labels(records, tasks, target_task)
    labels = {t: (table[t].values, table[t].present_mask) for t in tasks}
    return metrics.evaluate(preds, labels)
