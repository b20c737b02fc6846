"""Experiment orchestration: configs, splits, run logs, summaries.

Configs are flat text files of dotted keys (``train.damping = 0.2``);
every key must exist in DEFAULTS, so typos fail loudly. A run fixes the
world and corpus from their own seeds, then uses the run seed for
network init, pre-training order, and curvature-batch sampling. The
validation split is a stable hash of the utterance index, so it never
depends on Python's per-process hashing.
"""

from __future__ import annotations

import csv
import hashlib
import os
import time
from dataclasses import dataclass

import numpy as np

from .network import NetworkSpec, forward, init_network
from .optimizers import OptimizerConfig, RunLogRow, pretrain_frame_ce, train
from .task import SequenceProblem, build_lattice, generate_corpus, make_world


class ConfigError(ValueError):
    """Raised for unknown keys, bad values, or unreadable config files."""


DEFAULTS = {
    "world.num_phones": 8,
    "world.states_per_phone": 2,
    "world.input_dim": 6,
    "world.separation": 0.9,
    "world.emission_scale": 1.0,
    "world.dur_min": 3,
    "world.dur_max": 8,
    "world.seed": 0,
    "corpus.num_utterances": 128,
    "corpus.min_phones": 3,
    "corpus.max_phones": 6,
    "corpus.seed": 1,
    "network.hidden": (48, 48),
    "network.activation": "relu",
    "task.kappa": 0.1,
    "task.prior_scale": 1.0,
    "task.beam": 4,
    "task.valid_fraction": 0.15,
    "task.split_seed": 17,
    "pretrain.epochs": 5,
    "pretrain.batch_size": 8,
    "pretrain.learning_rate": 0.2,
    "pretrain.momentum": 0.9,
    "pretrain.anneal": 0.8,
    "train.method": "nghf",
    "train.epochs": 4,
    "train.updates_per_epoch": 8,
    "train.learning_rate": 1.0,
    "train.momentum": 0.9,
    "train.anneal": 0.75,
    "train.step_scale": 1.0,
    "train.damping": 0.005,
    "train.curvature_fraction": 0.25,
    "train.cg_iterations": 6,
    "train.ng_cg_iterations": 24,
    "train.cg_tolerance": 1e-8,
    "train.nghf_rhs": "gradient",
    "compare.methods": ("sgd", "ng", "hf", "nghf"),
    "compare.seeds": (0, 1, 2, 3, 4, 5, 6),
}


def _parse_value(key, text, default):
    try:
        if isinstance(default, bool):
            raise TypeError("no boolean keys defined")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            parts = [p.strip() for p in text.split(",") if p.strip()]
            elem = int if (not default or isinstance(default[0], int)) else str
            return tuple(elem(p) for p in parts)
        return text
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    @classmethod
    def from_text(cls, text):
        values = dict(DEFAULTS)
        seen = set()
        for line_no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"line {line_no}: unknown config key {key!r}")
            if key in seen:
                raise ConfigError(f"line {line_no}: duplicate config key {key!r}")
            seen.add(key)
            values[key] = _parse_value(key, val, DEFAULTS[key])
        return cls(values)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as f:
                text = f.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)

    @classmethod
    def from_overrides(cls, **overrides):
        values = dict(DEFAULTS)
        for key, val in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = val
        return cls(values)

    def __getitem__(self, key):
        if key not in self.values:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def world(self):
        return make_world(
            num_phones=self["world.num_phones"],
            states_per_phone=self["world.states_per_phone"],
            input_dim=self["world.input_dim"],
            seed=self["world.seed"],
            separation=self["world.separation"],
            emission_scale=self["world.emission_scale"],
            dur_min=self["world.dur_min"],
            dur_max=self["world.dur_max"],
        )

    def corpus(self, world):
        return generate_corpus(
            world,
            self["corpus.num_utterances"],
            self["corpus.seed"],
            min_phones=self["corpus.min_phones"],
            max_phones=self["corpus.max_phones"],
        )

    def network_spec(self, world):
        return NetworkSpec(
            input_dim=world.input_dim,
            hidden_dims=tuple(self["network.hidden"]),
            output_dim=world.num_states,
            activation=self["network.activation"],
        )

    def optimizer_config(self, method=None):
        try:
            return OptimizerConfig(
                method=method or self["train.method"],
                epochs=self["train.epochs"],
                updates_per_epoch=self["train.updates_per_epoch"],
                learning_rate=self["train.learning_rate"],
                momentum=self["train.momentum"],
                anneal=self["train.anneal"],
                step_scale=self["train.step_scale"],
                damping=self["train.damping"],
                curvature_fraction=self["train.curvature_fraction"],
                cg_iterations=self["train.cg_iterations"],
                ng_cg_iterations=self["train.ng_cg_iterations"],
                cg_tolerance=self["train.cg_tolerance"],
                nghf_rhs=self["train.nghf_rhs"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def validation_split(num_utterances, fraction, split_seed):
    """Deterministic hash split; returns (train_indices, valid_indices)."""
    if not 0 < fraction < 1:
        raise ConfigError(f"valid_fraction must lie in (0, 1), got {fraction}")
    valid = []
    train = []
    for i in range(num_utterances):
        digest = hashlib.sha256(f"{split_seed}:{i}".encode()).digest()
        bucket = int.from_bytes(digest[:8], "big") % 10000
        (valid if bucket < fraction * 10000 else train).append(i)
    if not valid or not train:
        raise ConfigError(
            f"split left {len(train)} train / {len(valid)} valid utterances; "
            "adjust valid_fraction or corpus size"
        )
    return train, valid


@dataclass(frozen=True)
class ExperimentResult:
    problem: SequenceProblem
    theta_pretrained: object
    theta: object
    rows: list
    train_indices: list
    valid_indices: list
    seconds: float


def build_problem(config, seed):
    """World, corpus, pre-trained net, lattices; shared run preamble."""
    world = config.world()
    corpus = config.corpus(world)
    spec = config.network_spec(world)
    theta0 = init_network(spec, seed=seed)
    problem_ce = SequenceProblem(
        spec, world, corpus, None, config["task.kappa"], config["task.prior_scale"]
    )
    theta_ce = pretrain_frame_ce(
        problem_ce,
        theta0,
        seed=seed,
        epochs=config["pretrain.epochs"],
        batch_size=config["pretrain.batch_size"],
        learning_rate=config["pretrain.learning_rate"],
        momentum=config["pretrain.momentum"],
        anneal=config["pretrain.anneal"],
    )
    lattices = []
    for utt in corpus:
        outputs, _ = forward(spec, theta_ce, utt.frames)
        lattices.append(
            build_lattice(
                world,
                utt,
                outputs,
                config["task.beam"],
                config["task.kappa"],
                config["task.prior_scale"],
            )
        )
    problem = SequenceProblem(
        spec, world, corpus, lattices, config["task.kappa"], config["task.prior_scale"]
    )
    return problem, theta_ce


def run_experiment(config, seed, method=None):
    """Full pipeline for one (config, seed, method) run."""
    start = time.perf_counter()
    problem, theta_ce = build_problem(config, seed)
    train_idx, valid_idx = validation_split(
        problem.num_utterances, config["task.valid_fraction"], config["task.split_seed"]
    )
    opt = config.optimizer_config(method)
    theta, rows = train(problem, theta_ce, opt, seed, train_idx, valid_idx)
    seconds = time.perf_counter() - start
    return ExperimentResult(problem, theta_ce, theta, rows, train_idx, valid_idx, seconds)


RUNLOG_FIELDS = (
    "update",
    "method",
    "seed",
    "train_criterion",
    "valid_criterion",
    "valid_error_rate",
    "entropy",
    "step_norm",
    "cg_iterations",
    "ng_weight",
    "phi_decrease",
)


def write_runlog(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RUNLOG_FIELDS)
        for row in rows:
            writer.writerow(
                [
                    row.update,
                    row.method,
                    row.seed,
                    repr(row.train_criterion),
                    repr(row.valid_criterion),
                    repr(row.valid_error_rate),
                    repr(row.entropy),
                    repr(row.step_norm),
                    row.cg_iterations,
                    "" if row.ng_weight is None else repr(row.ng_weight),
                    "" if row.phi_decrease is None else repr(row.phi_decrease),
                ]
            )


def read_runlog(path):
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != RUNLOG_FIELDS:
            raise ConfigError(f"{path}: unexpected run-log header {header}")
        for rec in reader:
            rows.append(
                RunLogRow(
                    update=int(rec[0]),
                    method=rec[1],
                    seed=int(rec[2]),
                    train_criterion=float(rec[3]),
                    valid_criterion=float(rec[4]),
                    valid_error_rate=float(rec[5]),
                    entropy=float(rec[6]),
                    step_norm=float(rec[7]),
                    cg_iterations=int(rec[8]),
                    ng_weight=None if rec[9] == "" else float(rec[9]),
                    phi_decrease=None if rec[10] == "" else float(rec[10]),
                )
            )
    return rows


PLOT_METRICS = (
    "train_criterion",
    "valid_criterion",
    "valid_error_rate",
    "entropy",
    "step_norm",
)


def emit_plots_data(rows, out_dir, metrics=PLOT_METRICS):
    """Long-format series files, one per metric, for external plotting."""
    paths = []
    for metric in metrics:
        if metric not in RUNLOG_FIELDS:
            raise ConfigError(f"unknown plot metric {metric!r}")
        path = os.path.join(out_dir, f"plot_{metric}.csv")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(("update", "method", "seed", "metric", "value"))
            for row in rows:
                writer.writerow(
                    (row.update, row.method, row.seed, metric, repr(getattr(row, metric)))
                )
        paths.append(path)
    return paths


def summarize(rows):
    """Per-method medians of each run's final log row.

    Returns a list of dicts sorted by method name; expects rows from any
    number of (method, seed) runs concatenated.
    """
    finals = {}
    for row in rows:
        finals[(row.method, row.seed)] = row
    by_method = {}
    for (method, _), row in finals.items():
        by_method.setdefault(method, []).append(row)
    out = []
    for method in sorted(by_method):
        group = by_method[method]
        out.append(
            {
                "method": method,
                "runs": len(group),
                "valid_criterion": float(np.median([r.valid_criterion for r in group])),
                "valid_error_rate": float(np.median([r.valid_error_rate for r in group])),
                "train_criterion": float(np.median([r.train_criterion for r in group])),
                "entropy": float(np.median([r.entropy for r in group])),
            }
        )
    return out


def format_summary(summary):
    header = f"{'method':<8} {'runs':>4} {'train':>10} {'valid':>10} {'ser':>8} {'entropy':>9}"
    lines = [header, "-" * len(header)]
    for row in summary:
        lines.append(
            f"{row['method']:<8} {row['runs']:>4} {row['train_criterion']:>10.4f} "
            f"{row['valid_criterion']:>10.4f} {row['valid_error_rate']:>8.4f} "
            f"{row['entropy']:>9.4f}"
        )
    return "\n".join(lines)


def write_summary(path, summary):
    fields = ("method", "runs", "train_criterion", "valid_criterion", "valid_error_rate", "entropy")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(fields)
        for row in summary:
            writer.writerow([row[k] for k in fields])
