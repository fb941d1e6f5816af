"""Experiment grids: defenses x attacks x informed-attacker settings x tasks.

A grid is described by a JSON-friendly dict (see parse_grid). Running it
crafts adversarial images once per (attack, ste, task) cell against the raw
model, then evaluates every defense on the shared perturbed images. Crafting
parallelizes over images; per-image seeds derive from (base_seed, index), so
results are byte-identical for any worker count. Wall times are recorded per
row but excluded from CSV output so CSVs stay reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import __version__
from . import attacks, evaluate, tinymodel
from .dataset import DatasetParams, SyntheticDataset, generate_dataset
from .filters import TransformPipeline, pipeline_from_config
from .imagecore import psnr

__all__ = [
    "ExperimentGrid",
    "EvalRow",
    "EvalReport",
    "parse_grid",
    "run_grid",
    "emit_report",
    "load_report",
    "informed_worst_case",
]

TASKS = ("classification", "retrieval")
_METRIC_FOR_TASK = {"classification": "accuracy", "retrieval": "map"}


@dataclass(frozen=True)
class GridDatasetSpec:
    size: int = 32
    train_count: int = 400
    eval_count: int = 200
    query_count: int = 32
    noise: float = 0.3
    train_seed: int = 101
    eval_seed: int = 102
    query_seed: int = 103


@dataclass(frozen=True)
class GridModelSpec:
    hidden: int = 128
    epochs: int = 200
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 7
    batch_size: int = 40
    checkpoint: str | None = None


@dataclass(frozen=True)
class ExperimentGrid:
    """A fully validated sweep description."""

    dataset: GridDatasetSpec
    model: GridModelSpec
    defenses: tuple[tuple[str, TransformPipeline], ...]
    attacks: tuple[tuple[str, attacks.AttackConfig], ...]
    ste_grid: tuple[tuple[str, attacks.SteConfig], ...]
    tasks: tuple[str, ...]
    base_seed: int
    eval_subset: int | None
    config: dict = field(compare=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if len(self.defenses) == 0:
            raise ValueError("grid needs at least one defense (use id 'none' with [])")
        if len(self.attacks) == 0:
            raise ValueError("grid needs at least one attack")
        if len(self.ste_grid) == 0:
            raise ValueError("grid needs at least one ste entry (e.g. oblivious)")
        for group, name in ((self.defenses, "defense"), (self.attacks, "attack"),
                            (self.ste_grid, "ste")):
            ids = [i for i, _ in group]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {name} ids: {ids}")
        for t in self.tasks:
            if t not in TASKS:
                raise ValueError(f"unknown task {t!r}; valid: {list(TASKS)}")
        if len(self.tasks) == 0:
            raise ValueError("grid needs at least one task")
        if self.base_seed < 0:
            raise ValueError("base_seed must be non-negative")
        if self.eval_subset is not None and self.eval_subset < 1:
            raise ValueError("eval_subset must be >= 1 when given")


@dataclass
class EvalRow:
    defense: str
    attack: str
    ste: str
    ste_k: int | None
    ste_pq: float | None
    task: str
    metric: str
    value: float
    n: int
    psnr_mean: float
    wall_time_s: float


@dataclass
class EvalReport:
    rows: list[EvalRow]
    provenance: dict
    errors: list[dict] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return len(self.errors) == 0


def parse_grid(config: dict) -> ExperimentGrid:
    """Validate a config mapping and build an ExperimentGrid.

    Schema (JSON): {
      "dataset": {size, train_count, eval_count, query_count, noise,
                  train_seed, eval_seed, query_seed},
      "model":   {hidden, epochs, learning_rate, momentum, seed, batch_size,
                  checkpoint},
      "defenses": [{"id": str, "pipeline": [{"op": ..., ...}, ...]}, ...],
      "attacks":  [{"id": str, "family": ..., "epsilon": number|"a/b", ...}],
      "ste_grid": [{"id": str, "enabled": bool, "k_attack", "p_q", "mode"}],
      "tasks": ["classification", "retrieval"],
      "base_seed": int,
      "eval_subset": int | null
    }
    All sections except defenses/attacks have usable defaults.
    """
    if not isinstance(config, dict):
        raise ValueError(f"grid config must be a mapping, got {type(config).__name__}")
    known = {"dataset", "model", "defenses", "attacks", "ste_grid", "tasks",
             "base_seed", "eval_subset"}
    unknown = config.keys() - known
    if unknown:
        raise ValueError(f"unknown grid config keys {sorted(unknown)}")

    try:
        ds_spec = GridDatasetSpec(**config.get("dataset", {}))
        model_spec = GridModelSpec(**config.get("model", {}))
    except TypeError as exc:
        raise ValueError(f"bad dataset/model section: {exc}") from exc

    defenses = []
    for i, entry in enumerate(config.get("defenses", [])):
        if not isinstance(entry, dict) or "id" not in entry or "pipeline" not in entry:
            raise ValueError(f"defense {i} must be {{'id': ..., 'pipeline': [...]}}")
        defenses.append((str(entry["id"]), pipeline_from_config(entry["pipeline"])))

    attack_list = []
    for i, entry in enumerate(config.get("attacks", [])):
        if not isinstance(entry, dict) or "id" not in entry:
            raise ValueError(f"attack {i} must be a mapping with an 'id'")
        attack_list.append((str(entry["id"]), attacks.attack_config_from_dict(entry)))

    ste_entries = config.get("ste_grid", [{"id": "oblivious", "enabled": False}])
    ste_grid = []
    for i, entry in enumerate(ste_entries):
        if not isinstance(entry, dict) or "id" not in entry:
            raise ValueError(f"ste entry {i} must be a mapping with an 'id'")
        ste_grid.append((str(entry["id"]), attacks.ste_config_from_dict(entry)))

    tasks = tuple(config.get("tasks", ["classification"]))
    eval_subset = config.get("eval_subset")
    return ExperimentGrid(
        dataset=ds_spec,
        model=model_spec,
        defenses=tuple(defenses),
        attacks=tuple(attack_list),
        ste_grid=tuple(ste_grid),
        tasks=tasks,
        base_seed=int(config.get("base_seed", 0)),
        eval_subset=None if eval_subset is None else int(eval_subset),
        config=config,
    )


def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _prepare_model(grid: ExperimentGrid, train_ds: SyntheticDataset) -> tinymodel.TinyModel:
    spec = grid.model
    if spec.checkpoint is not None:
        return tinymodel.load_model(spec.checkpoint)
    init = tinymodel.init_model(
        height=grid.dataset.size, width=grid.dataset.size, channels=3,
        hidden=spec.hidden, classes=len(train_ds.class_names), seed=spec.seed,
    )
    return tinymodel.train(
        init, train_ds, epochs=spec.epochs, learning_rate=spec.learning_rate,
        momentum=spec.momentum, seed=spec.seed, batch_size=spec.batch_size,
    )


def _craft_one(args) -> tuple[np.ndarray, float]:
    model, image, loss, cfg, ste = args
    result = attacks.run_attack(model, image, loss, cfg, ste)
    return result.adversarial, result.psnr_db


def _craft_set(
    model: tinymodel.TinyModel,
    images: np.ndarray,
    losses: list,
    cfg: attacks.AttackConfig,
    ste: attacks.SteConfig,
    base_seed: int,
    workers: int,
) -> tuple[list[np.ndarray], list[float]]:
    """Attack each image with its own derived seed; order-stable output."""
    jobs = []
    for i in range(len(images)):
        seeded = replace(cfg, seed=attacks.derive_image_seed(base_seed, i))
        jobs.append((model, images[i], losses[i], seeded, ste))
    if workers <= 1:
        outs = [_craft_one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_craft_one, jobs))
    return [o[0] for o in outs], [o[1] for o in outs]


def run_grid(grid: ExperimentGrid, workers: int = 1) -> EvalReport:
    """Execute every (defense, attack, ste, task) cell of the grid.

    Adversarial images are crafted against the raw model (the oblivious
    threat model; the informed attacker differs only through its STE
    settings) and cached across defenses. Cell failures are recorded in
    report.errors and the run continues.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    ds_spec = grid.dataset
    train_ds = generate_dataset(DatasetParams(
        count=ds_spec.train_count, size=ds_spec.size,
        noise=ds_spec.noise, seed=ds_spec.train_seed,
    ))
    eval_ds = generate_dataset(DatasetParams(
        count=ds_spec.eval_count, size=ds_spec.size,
        noise=ds_spec.noise, seed=ds_spec.eval_seed,
    ))
    query_ds = generate_dataset(DatasetParams(
        count=ds_spec.query_count, size=ds_spec.size,
        noise=ds_spec.noise, seed=ds_spec.query_seed,
    ))
    model = _prepare_model(grid, train_ds)

    subset = len(eval_ds) if grid.eval_subset is None else min(grid.eval_subset, len(eval_ds))
    eval_images = eval_ds.images[:subset]
    eval_labels = eval_ds.labels[:subset]
    # Same-class relevance for retrieval; gallery is the full eval split.
    relevance = query_ds.labels[:, np.newaxis] == eval_ds.labels[np.newaxis, :]

    clean_query_refs = None
    if "retrieval" in grid.tasks:
        clean_query_refs = [
            tinymodel.forward(model, q)[0] for q in query_ds.images
        ]

    crafted: dict[tuple[str, str, str], tuple[list, list]] = {}

    def get_crafted(attack_id, cfg, ste_id, ste_cfg, task):
        key = (attack_id, ste_id, task)
        if key not in crafted:
            if task == "classification":
                images = eval_images
                losses = [tinymodel.CrossEntropyLoss(int(y)) for y in eval_labels]
            else:
                images = query_ds.images
                losses = [
                    tinymodel.NegCosineLoss(reference=ref) for ref in clean_query_refs
                ]
            crafted[key] = _craft_set(
                model, images, losses, cfg, ste_cfg, grid.base_seed, workers
            )
        return crafted[key]

    rows: list[EvalRow] = []
    errors: list[dict] = []
    for defense_id, pipeline in grid.defenses:
        for attack_id, cfg in grid.attacks:
            for ste_id, ste_cfg in grid.ste_grid:
                for task in grid.tasks:
                    start = time.perf_counter()
                    try:
                        adv, psnrs = get_crafted(attack_id, cfg, ste_id, ste_cfg, task)
                        if task == "classification":
                            value = evaluate.evaluate_accuracy(
                                model, (eval_images, eval_labels),
                                defense=pipeline, adversarial=adv,
                            )
                            n = len(eval_labels)
                        else:
                            value = evaluate.evaluate_retrieval_map(
                                model, adv, eval_ds.images, relevance,
                                defense=pipeline,
                            )
                            n = len(adv)
                    except Exception as exc:
                        errors.append({
                            "defense": defense_id, "attack": attack_id,
                            "ste": ste_id, "task": task,
                            "error": f"{type(exc).__name__}: {exc}",
                        })
                        continue
                    rows.append(EvalRow(
                        defense=defense_id,
                        attack=attack_id,
                        ste=ste_id,
                        ste_k=ste_cfg.k_attack if ste_cfg.enabled else None,
                        ste_pq=ste_cfg.p_q if ste_cfg.enabled else None,
                        task=task,
                        metric=_METRIC_FOR_TASK[task],
                        value=value,
                        n=n,
                        psnr_mean=float(np.mean(psnrs)),
                        wall_time_s=time.perf_counter() - start,
                    ))
    provenance = {
        "config_hash": _config_hash(grid.config),
        "model_hash": tinymodel.model_hash(model),
        "seed": grid.base_seed,
        "tool_version": __version__,
    }
    return EvalReport(rows=rows, provenance=provenance, errors=errors)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("defense", "attack", "ste_k", "ste_pq", "task", "metric",
               "value", "n", "psnr_mean", "seed")


def _format_number(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{float(x):.6g}"


def _sig6(x: float) -> float:
    if math.isinf(x):
        return x
    return float(f"{float(x):.6g}")


def rows_to_csv(report: EvalReport) -> str:
    """Render the report as CSV text with the fixed column set."""
    lines = [",".join(CSV_COLUMNS)]
    seed = report.provenance.get("seed", 0)
    for r in report.rows:
        lines.append(",".join([
            r.defense,
            r.attack,
            "" if r.ste_k is None else str(r.ste_k),
            "" if r.ste_pq is None else _format_number(r.ste_pq),
            r.task,
            r.metric,
            _format_number(r.value),
            str(r.n),
            _format_number(r.psnr_mean),
            str(seed),
        ]))
    return "\n".join(lines) + "\n"


def report_to_dict(report: EvalReport) -> dict:
    """JSON-ready view: rows (numbers at 6 significant digits), provenance, errors."""
    rows = []
    for r in report.rows:
        d = asdict(r)
        d["value"] = _sig6(r.value)
        d["psnr_mean"] = _sig6(r.psnr_mean)
        d["ste_pq"] = None if r.ste_pq is None else _sig6(r.ste_pq)
        rows.append(d)
    return {"rows": rows, "provenance": report.provenance, "errors": report.errors}


def emit_report(report: EvalReport, fmt: str, path: str) -> None:
    """Write the report as 'csv' or 'json'.

    JSON serializes non-finite psnr means with the json module's Infinity
    literal, which load_report reads back.
    """
    if fmt == "csv":
        text = rows_to_csv(report)
    elif fmt == "json":
        text = json.dumps(report_to_dict(report), indent=2) + "\n"
    else:
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    with open(path, "w") as fh:
        fh.write(text)


def load_report(path: str) -> EvalReport:
    """Read back a JSON report written by emit_report."""
    with open(path) as fh:
        data = json.load(fh)
    try:
        rows = [EvalRow(**r) for r in data["rows"]]
        return EvalReport(rows=rows, provenance=data["provenance"],
                          errors=data.get("errors", []))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path} is not a report file: {exc}") from exc


def informed_worst_case(
    report: EvalReport,
    defense: str,
    attack: str,
    task: str,
    higher_is_better: bool = True,
) -> tuple[float, str]:
    """Worst metric over the informed (STE-enabled) entries of one cell group.

    Mirrors reporting the single worst (K_attack, p_q) combination per
    defense. Returns (value, ste id). Higher-is-better metrics are
    minimized; error-style metrics maximized.
    """
    candidates = [
        r for r in report.rows
        if r.defense == defense and r.attack == attack and r.task == task
        and r.ste_k is not None
    ]
    if not candidates:
        raise ValueError(
            f"no informed rows for defense={defense!r} attack={attack!r} task={task!r}"
        )
    pick = min if higher_is_better else max
    best = pick(candidates, key=lambda r: (r.value, r.ste))
    return best.value, best.ste
