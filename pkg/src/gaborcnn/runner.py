"""Experiment harness: config files, dataset setup, training runs, sweeps.

Configs are INI files (key = value sections). Training emits a per-epoch CSV
(schema train-csv-v1) plus a JSON summary, and sweeps emit one table row per
bank setting (schema sweep-csv-v1). All randomness is derived from the
config seed, so reruns are reproducible apart from wall-clock columns.
"""

from __future__ import annotations

import configparser
import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from . import dataio
from .errors import ConfigError
from .network import (
    Network,
    TrainSchedule,
    build_network,
    count_params,
    evaluate,
    save_checkpoint,
    train_epoch,
)
from .optim import OptimizerConfig

TRAIN_CSV_SCHEMA = "train-csv-v1"
SWEEP_CSV_SCHEMA = "sweep-csv-v1"
TRAIN_CSV_COLUMNS = ["epoch", "lr", "train_loss", "val_error", "seconds"]
SWEEP_CSV_COLUMNS = ["axis", "value", "kernel", "repeats", "mean_error", "errors"]


@dataclass
class ExperimentConfig:
    arch: dict
    schedule: TrainSchedule
    optimizer: str
    data: dict
    seed: int
    rho: float = 0.9
    eps: float = 1e-6

    @property
    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            method=self.optimizer,
            rho=self.rho,
            eps=self.eps,
            weight_decay=self.schedule.weight_decay,
        )


def _parse_widths(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    try:
        model = parser["model"]
        arch = {
            "type": model.get("type", "gcn"),
            "widths": _parse_widths(model.get("widths", "10,20,40,80")),
            "kernel": model.getint("kernel", 3),
            "orientations": model.getint("orientations", 4),
            "scales": model.getint("scales", 4),
            "dropout": model.getfloat("dropout", 0.5),
            "num_classes": model.getint("num_classes", 10),
            "fc_hidden": model.getint("fc_hidden", 0),
            "input_channels": model.getint("input_channels", 1),
            "input_size": model.getint("input_size", 28),
        }
        train = parser["train"] if parser.has_section("train") else {}
        schedule = TrainSchedule(
            epochs=int(train.get("epochs", 15)),
            batch_size=int(train.get("batch_size", 128)),
            initial_lr=float(train.get("initial_lr", 0.001)),
            weight_decay=float(train.get("weight_decay", 0.00005)),
            halving_period_epochs=int(train.get("halving_period_epochs", 25)),
        )
        optimizer = str(train.get("optimizer", "adadelta"))
        rho = float(train.get("rho", 0.9))
        eps = float(train.get("eps", 1e-6))
        data_sec = parser["data"] if parser.has_section("data") else {}
        data = {
            "source": str(data_sec.get("source", "builtin")),
            "train_images": data_sec.get("train_images"),
            "train_labels": data_sec.get("train_labels"),
            "test_images": data_sec.get("test_images"),
            "test_labels": data_sec.get("test_labels"),
            "n_train": int(data_sec.get("n_train", 2000)),
            "n_test": int(data_sec.get("n_test", 1000)),
            "rotate": str(data_sec.get("rotate", "false")).lower() in ("1", "true", "yes"),
            "rotate_seed": int(data_sec.get("rotate_seed", 7)),
        }
        run = parser["run"] if parser.has_section("run") else {}
        seed = int(run.get("seed", 0))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    return ExperimentConfig(arch, schedule, optimizer, data, seed, rho, eps)


def load_datasets(cfg: ExperimentConfig):
    """(train, test) datasets per the [data] section, rotated if requested."""
    data = cfg.data
    if data["source"] == "builtin":
        train, test = dataio.load_builtin_digits(
            data["n_train"], data["n_test"], seed=cfg.seed
        )
    elif data["source"] == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if not data.get(key):
                raise ConfigError(f"idx source requires data.{key}")
        train = dataio.load_idx(data["train_images"], data["train_labels"])
        test = dataio.load_idx(data["test_images"], data["test_labels"])
        rng = np.random.default_rng(cfg.seed)
        if data["n_train"] < len(train):
            train = train.subset(rng.permutation(len(train))[: data["n_train"]])
        if data["n_test"] < len(test):
            test = test.subset(rng.permutation(len(test))[: data["n_test"]])
    else:
        raise ConfigError(f"unknown data source {data['source']!r}")
    if data["rotate"]:
        # independent streams for train and test
        train = dataio.make_rot(train, seed=data["rotate_seed"])
        test = dataio.make_rot(test, seed=data["rotate_seed"] + 1)
    return train, test


def train_run(
    cfg: ExperimentConfig,
    out_dir: str | None = None,
    seed: int | None = None,
    arch_override: dict | None = None,
    datasets=None,
) -> dict:
    """Train one network, evaluating on the test split every epoch.

    Returns the JSON-ready summary. With `out_dir` set, also writes
    metrics.csv, summary.json and checkpoint.zip.
    """
    seed = cfg.seed if seed is None else seed
    arch = dict(cfg.arch)
    if arch_override:
        arch.update(arch_override)
    train, test = load_datasets(cfg) if datasets is None else datasets
    net = build_network(arch, seed=seed)
    opt = cfg.optimizer_config
    shuffle_rng = np.random.default_rng(seed + 10_000)

    rows = []
    for epoch in range(cfg.schedule.epochs):
        metrics = train_epoch(
            net, train.images, train.labels, cfg.schedule, epoch, opt, shuffle_rng
        )
        metrics["val_error"] = evaluate(net, test.images, test.labels)
        rows.append(metrics)
    final_error = evaluate(net, test.images, test.labels)

    summary = {
        "schema": "train-summary-v1",
        "seed": seed,
        "arch": arch,
        "optimizer": cfg.optimizer,
        "epochs": cfg.schedule.epochs,
        "initial_lr": cfg.schedule.initial_lr,
        "train_provenance": train.provenance,
        "test_provenance": test.provenance,
        "final_test_error": final_error,
        "param_counts": count_params(net),
        "epoch_rows": [
            {k: row[k] for k in TRAIN_CSV_COLUMNS} for row in rows
        ],
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "metrics.csv")
        with open(csv_path, "w", newline="") as fh:
            fh.write(f"# schema={TRAIN_CSV_SCHEMA}\n")
            writer = csv.DictWriter(fh, fieldnames=TRAIN_CSV_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row[k] for k in TRAIN_CSV_COLUMNS})
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        save_checkpoint(
            net,
            os.path.join(out_dir, "checkpoint.zip"),
            meta={"seed": seed, "epochs": cfg.schedule.epochs,
                  "schedule": {"batch_size": cfg.schedule.batch_size,
                               "initial_lr": cfg.schedule.initial_lr,
                               "weight_decay": cfg.schedule.weight_decay,
                               "halving_period_epochs": cfg.schedule.halving_period_epochs}},
        )
    summary["_network"] = net  # in-process convenience; stripped from JSON
    return summary


def sweep(
    cfg: ExperimentConfig,
    axis: str,
    out_path: str | None = None,
    repeats: int = 1,
) -> list[dict]:
    """Repeat desk-scale training across bank settings.

    axis 'orientation' varies U over 2..7; axis 'scale' compares a
    single-scale bank (V=1) against the multi-scale default (V=4).
    """
    if axis == "orientation":
        settings = [("orientations", u) for u in range(2, 8)]
    elif axis == "scale":
        settings = [("scales", 1), ("scales", 4)]
    else:
        raise ConfigError(f"unknown sweep axis {axis!r} (use scale|orientation)")

    datasets = load_datasets(cfg)
    rows = []
    for key, value in settings:
        errors = []
        for r in range(repeats):
            summary = train_run(
                cfg, seed=cfg.seed + r, arch_override={key: value}, datasets=datasets
            )
            errors.append(summary["final_test_error"])
        rows.append(
            {
                "axis": axis,
                "value": value,
                "kernel": cfg.arch["kernel"],
                "repeats": repeats,
                "mean_error": float(np.mean(errors)),
                "errors": ";".join(f"{e:.6f}" for e in errors),
            }
        )
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            fh.write(f"# schema={SWEEP_CSV_SCHEMA}\n")
            writer = csv.DictWriter(fh, fieldnames=SWEEP_CSV_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    return rows
