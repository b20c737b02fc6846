import csv

import numpy as np
import pytest

from nghf.harness import (
    DEFAULTS,
    PLOT_METRICS,
    RUNLOG_FIELDS,
    ConfigError,
    ExperimentConfig,
    build_problem,
    emit_plots_data,
    format_summary,
    read_runlog,
    run_experiment,
    summarize,
    validation_split,
    write_runlog,
)
from nghf.optimizers import RunLogRow


def test_config_text_parsing():
    text = """
    # comment line
    task.kappa = 0.2   # trailing comment
    network.hidden = 8, 8
    train.method = hf
    compare.seeds = 0, 3
    """
    config = ExperimentConfig.from_text(text)
    assert config["task.kappa"] == 0.2
    assert config["network.hidden"] == (8, 8)
    assert config["train.method"] == "hf"
    assert config["compare.seeds"] == (0, 3)
    # untouched keys keep defaults
    assert config["world.num_phones"] == DEFAULTS["world.num_phones"]


def test_config_rejects_bad_input():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("no equals sign here")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("task.gamma = 1.0")  # unknown key
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("task.kappa = 0.1\ntask.kappa = 0.2")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("task.kappa = banana")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_overrides(**{"task.gamma": 1.0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file("/nonexistent/config.txt")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_overrides()["no.such.key"]


def test_config_builds_consistent_objects():
    config = ExperimentConfig.from_overrides(**{
        "world.num_phones": 3,
        "network.hidden": (5,),
        "train.method": "ng",
    })
    world = config.world()
    assert world.num_phones == 3
    spec = config.network_spec(world)
    assert spec.output_dim == world.num_states
    assert spec.hidden_dims == (5,)
    opt = config.optimizer_config()
    assert opt.method == "ng"
    assert config.optimizer_config(method="sgd").method == "sgd"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_overrides(**{"train.momentum": 2.0}).optimizer_config()


def test_validation_split_is_deterministic_and_disjoint():
    train_a, valid_a = validation_split(200, 0.1, 17)
    train_b, valid_b = validation_split(200, 0.1, 17)
    assert train_a == train_b and valid_a == valid_b
    assert set(train_a).isdisjoint(valid_a)
    assert sorted(train_a + valid_a) == list(range(200))
    assert 0 < len(valid_a) < 60  # near the requested tenth
    train_c, valid_c = validation_split(200, 0.1, 18)
    assert valid_c != valid_a  # the seed moves the bucket boundaries
    with pytest.raises(ValueError):
        validation_split(1, 0.9, 0)


def fake_rows():
    rows = []
    for seed in (0, 1):
        for i in range(3):
            rows.append(RunLogRow(
                update=i,
                method="nghf",
                seed=seed,
                train_criterion=0.1 * i + seed,
                valid_criterion=0.05 * i,
                valid_error_rate=1.0 - 0.1 * i,
                entropy=1.5 - 0.2 * i,
                step_norm=0.3,
                cg_iterations=7,
                ng_weight=0.9 if i else None,
                phi_decrease=0.01 * i if i else None,
            ))
    return rows


def test_runlog_round_trip_is_exact(tmp_path):
    rows = fake_rows()
    path = tmp_path / "runlog.csv"
    write_runlog(path, rows)
    back = read_runlog(path)
    assert back == rows
    with open(path) as f:
        header = f.readline().strip().split(",")
    assert tuple(header) == RUNLOG_FIELDS


def test_plot_data_is_long_format(tmp_path):
    rows = fake_rows()
    emit_plots_data(rows, tmp_path)
    for metric in PLOT_METRICS:
        path = tmp_path / f"plot_{metric}.csv"
        assert path.exists()
        with open(path) as f:
            got = list(csv.DictReader(f))
        assert len(got) == len(rows)
        assert set(got[0]) == {"update", "method", "seed", "metric", "value"}
        assert all(r["metric"] == metric for r in got)
    ent = {(int(r["seed"]), int(r["update"])): float(r["value"])
           for r in csv.DictReader(open(tmp_path / "plot_entropy.csv"))}
    assert ent[(1, 2)] == pytest.approx(1.1)


def test_summary_reports_final_row_medians():
    rows = fake_rows()
    summary = summarize(rows)
    assert [s["method"] for s in summary] == ["nghf"]
    stats = summary[0]
    assert stats["runs"] == 2
    # final update per seed: valid_criterion 0.1 both seeds
    assert stats["valid_criterion"] == pytest.approx(0.1)
    assert stats["valid_error_rate"] == pytest.approx(0.8)
    assert stats["train_criterion"] == pytest.approx(0.7)  # median of 0.2, 1.2
    text = format_summary(summary)
    assert "nghf" in text and "valid" in text


def small_config():
    return ExperimentConfig.from_overrides(**{
        "world.num_phones": 3,
        "world.input_dim": 4,
        "corpus.num_utterances": 10,
        "corpus.min_phones": 2,
        "corpus.max_phones": 3,
        "network.hidden": (6,),
        "task.beam": 3,
        "task.valid_fraction": 0.2,
        "pretrain.epochs": 2,
        "train.epochs": 1,
        "train.updates_per_epoch": 3,
        "train.cg_iterations": 4,
        "compare.seeds": (0,),
    })


def test_run_experiment_produces_full_log():
    config = small_config()
    result = run_experiment(config, seed=0)
    assert len(result.rows) == 3
    assert result.rows[0].method == "nghf"
    assert set(result.train_indices).isdisjoint(result.valid_indices)
    assert result.seconds > 0
    # pretraining moved the weights; training moved them again
    assert not np.array_equal(result.theta_pretrained.values, result.theta.values)


def test_run_experiment_method_override():
    config = small_config()
    result = run_experiment(config, seed=0, method="sgd")
    assert all(r.method == "sgd" for r in result.rows)


def test_build_problem_is_deterministic():
    config = small_config()
    problem_a, theta_a = build_problem(config, seed=4)
    problem_b, theta_b = build_problem(config, seed=4)
    np.testing.assert_array_equal(theta_a.values, theta_b.values)
    assert problem_a.num_utterances == problem_b.num_utterances == 10
    for la, lb in zip(problem_a.lattices, problem_b.lattices):
        assert la.num_arcs == lb.num_arcs
        np.testing.assert_array_equal(la.arc_prior, lb.arc_prior)
