"""Shared fixtures: the pinned trend experiment and the informed sweep.

Both are expensive (training plus hundreds of attacked images), so they are
session-scoped and built lazily from the JSON configs shipped in configs/,
keeping the tests and the CLI on one source of truth.
"""

import json
import os
import time

import pytest

from ditherdefense import evaluate, sweep, tinymodel
from ditherdefense.dataset import DatasetParams, generate_dataset

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def load_config(name):
    with open(os.path.join(CONFIG_DIR, name)) as fh:
        return json.load(fh)


def build_datasets(ds_spec):
    train_ds = generate_dataset(DatasetParams(
        count=ds_spec.train_count, size=ds_spec.size,
        noise=ds_spec.noise, seed=ds_spec.train_seed,
    ))
    eval_ds = generate_dataset(DatasetParams(
        count=ds_spec.eval_count, size=ds_spec.size,
        noise=ds_spec.noise, seed=ds_spec.eval_seed,
    ))
    return train_ds, eval_ds


def train_from_spec(model_spec, train_ds, size):
    init = tinymodel.init_model(
        height=size, width=size, channels=3,
        hidden=model_spec.hidden, classes=len(train_ds.class_names),
        seed=model_spec.seed,
    )
    return tinymodel.train(
        init, train_ds, epochs=model_spec.epochs,
        learning_rate=model_spec.learning_rate, momentum=model_spec.momentum,
        seed=model_spec.seed, batch_size=model_spec.batch_size,
    )


@pytest.fixture(scope="session")
def trend():
    """The pinned trend run: model, datasets, and per-defense PGD accuracy."""
    grid = sweep.parse_grid(load_config("trend.json"))
    start = time.perf_counter()
    report = sweep.run_grid(grid, workers=1)
    train_ds, eval_ds = build_datasets(grid.dataset)
    model = train_from_spec(grid.model, train_ds, grid.dataset.size)
    clean_accuracy = evaluate.evaluate_accuracy(model, eval_ds)
    elapsed = time.perf_counter() - start
    assert not report.errors, report.errors
    by_defense = {r.defense: r.value for r in report.rows}
    return {
        "grid": grid,
        "report": report,
        "model": model,
        "train_ds": train_ds,
        "eval_ds": eval_ds,
        "clean_accuracy": clean_accuracy,
        "pgd_accuracy": by_defense,
        "elapsed_s": elapsed,
    }


@pytest.fixture(scope="session")
def informed_sweep():
    """The informed-attacker sweep, run with 8 workers and again with 1."""
    config = load_config("informed_sweep.json")
    start = time.perf_counter()
    report8 = sweep.run_grid(sweep.parse_grid(config), workers=8)
    elapsed8 = time.perf_counter() - start
    report1 = sweep.run_grid(sweep.parse_grid(config), workers=1)
    assert not report8.errors, report8.errors
    assert not report1.errors, report1.errors
    return {
        "report_8w": report8,
        "report_1w": report1,
        "csv_8w": sweep.rows_to_csv(report8),
        "csv_1w": sweep.rows_to_csv(report1),
        "elapsed_8w_s": elapsed8,
    }
